//! Change-map composition from two binary cropland maps, and the peak-NDVI
//! anomaly filter with its TPR/FPR threshold sweep.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::grid::{ClassGrid, GridHeader, RealGrid};

/// Binary reference / map label for a single year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CropLabel {
    NonCrop,
    Crop,
}

impl CropLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CropLabel::NonCrop => "noncrop",
            CropLabel::Crop => "crop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crop" => Ok(CropLabel::Crop),
            "noncrop" | "non-crop" | "non_crop" => Ok(CropLabel::NonCrop),
            other => Err(Error::Invalid(format!("unknown label {other:?} (expected crop or noncrop)"))),
        }
    }
}

/// The four transition classes of a two-year change map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ChangeClass {
    StableNonCrop = 0,
    StableCrop = 1,
    Gain = 2,
    Loss = 3,
}

impl ChangeClass {
    pub const ALL: [ChangeClass; 4] = [
        ChangeClass::StableNonCrop,
        ChangeClass::StableCrop,
        ChangeClass::Gain,
        ChangeClass::Loss,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            ChangeClass::StableNonCrop => "stable_noncrop",
            ChangeClass::StableCrop => "stable_crop",
            ChangeClass::Gain => "gain",
            ChangeClass::Loss => "loss",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(code) = t.parse::<u8>() {
            return Self::from_code(code)
                .ok_or_else(|| Error::Invalid(format!("change class code {code} out of range 0..=3")));
        }
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.label() == t)
            .ok_or_else(|| Error::Invalid(format!("unknown change class {t:?}")))
    }

    /// (2020 label, 2021 label) encoded by this class.
    pub fn annual_labels(self) -> (CropLabel, CropLabel) {
        match self {
            ChangeClass::StableNonCrop => (CropLabel::NonCrop, CropLabel::NonCrop),
            ChangeClass::StableCrop => (CropLabel::Crop, CropLabel::Crop),
            ChangeClass::Gain => (CropLabel::NonCrop, CropLabel::Crop),
            ChangeClass::Loss => (CropLabel::Crop, CropLabel::NonCrop),
        }
    }

    pub fn from_annual(y2020: CropLabel, y2021: CropLabel) -> Self {
        match (y2020, y2021) {
            (CropLabel::NonCrop, CropLabel::NonCrop) => ChangeClass::StableNonCrop,
            (CropLabel::Crop, CropLabel::Crop) => ChangeClass::StableCrop,
            (CropLabel::NonCrop, CropLabel::Crop) => ChangeClass::Gain,
            (CropLabel::Crop, CropLabel::NonCrop) => ChangeClass::Loss,
        }
    }

    pub fn is_change(self) -> bool {
        matches!(self, ChangeClass::Gain | ChangeClass::Loss)
    }
}

/// A four-class change grid with its per-stratum pixel counts attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMap {
    pub grid: ClassGrid,
    /// Non-nodata pixel count per change class code.
    pub class_counts: [u64; 4],
}

impl ChangeMap {
    /// Wrap an already-composed four-class grid, recounting its strata.
    pub fn from_grid(grid: ClassGrid) -> Result<Self> {
        let mut class_counts = [0u64; 4];
        for cell in grid.cells().iter().flatten() {
            if *cell > 3 {
                return Err(Error::Invalid(format!("change map holds class code {cell}, expected 0..=3")));
            }
            class_counts[*cell as usize] += 1;
        }
        Ok(ChangeMap { grid, class_counts })
    }

    pub fn read(path: &Path) -> Result<Self> {
        ChangeMap::from_grid(ClassGrid::read(path)?)
    }
}

fn require_binary(grid: &ClassGrid, what: &str) -> Result<()> {
    for cell in grid.cells().iter().flatten() {
        if *cell > 1 {
            return Err(Error::Invalid(format!("{what} holds non-binary cell value {cell}")));
        }
    }
    Ok(())
}

fn require_same_header(a: &GridHeader, b: &GridHeader) -> Result<()> {
    if a != b {
        return Err(Error::HeaderMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Combine two binary annual maps into the four-class change map. A nodata
/// cell in either year is nodata in the result.
pub fn compose_change(map_2020: &ClassGrid, map_2021: &ClassGrid) -> Result<ChangeMap> {
    require_same_header(&map_2020.header, &map_2021.header)?;
    require_binary(map_2020, "2020 map")?;
    require_binary(map_2021, "2021 map")?;
    let header = map_2020.header;
    let mut cells = Vec::with_capacity(header.len());
    let mut class_counts = [0u64; 4];
    for (a, b) in map_2020.cells().iter().zip(map_2021.cells()) {
        let class = match (a, b) {
            (Some(y0), Some(y1)) => {
                let c = ChangeClass::from_annual(
                    if *y0 == 1 { CropLabel::Crop } else { CropLabel::NonCrop },
                    if *y1 == 1 { CropLabel::Crop } else { CropLabel::NonCrop },
                );
                class_counts[c.code() as usize] += 1;
                Some(c.code())
            }
            _ => None,
        };
        cells.push(class);
    }
    Ok(ChangeMap {
        grid: ClassGrid::new(header, cells)?,
        class_counts,
    })
}

/// Split a change map back into the two binary annual maps.
pub fn decompose_change(change: &ClassGrid) -> Result<(ClassGrid, ClassGrid)> {
    let mut y2020 = Vec::with_capacity(change.header.len());
    let mut y2021 = Vec::with_capacity(change.header.len());
    for cell in change.cells() {
        match cell {
            None => {
                y2020.push(None);
                y2021.push(None);
            }
            Some(code) => {
                let class = ChangeClass::from_code(*code)
                    .ok_or_else(|| Error::Invalid(format!("change map holds class code {code}, expected 0..=3")))?;
                let (a, b) = class.annual_labels();
                y2020.push(Some(u8::from(a == CropLabel::Crop)));
                y2021.push(Some(u8::from(b == CropLabel::Crop)));
            }
        }
    }
    Ok((
        ClassGrid::new(change.header, y2020)?,
        ClassGrid::new(change.header, y2021)?,
    ))
}

/// Twelve monthly NDVI grids sharing one header.
#[derive(Debug, Clone)]
pub struct NdviStack {
    months: Vec<RealGrid>,
}

#[derive(Deserialize)]
struct StackManifest {
    months: Vec<String>,
}

impl NdviStack {
    pub fn new(months: Vec<RealGrid>) -> Result<Self> {
        if months.len() != 12 {
            return Err(Error::Invalid(format!("NDVI stack needs 12 monthly grids, got {}", months.len())));
        }
        let header = months[0].header;
        for (i, layer) in months.iter().enumerate() {
            require_same_header(&header, &layer.header)
                .map_err(|_| Error::HeaderMismatch(format!("month {i} header differs from month 0")))?;
            if let Some(bad) = layer.cells().iter().flatten().find(|v| !(-1.0..=1.0).contains(*v)) {
                return Err(Error::Invalid(format!("month {i} holds NDVI value {bad} outside [-1, 1]")));
            }
        }
        Ok(NdviStack { months })
    }

    /// Load a stack from a JSON manifest `{"months": [12 paths]}`; relative
    /// paths resolve against the manifest's directory.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: StackManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Invalid(format!("{}: invalid stack manifest: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let months = manifest
            .months
            .iter()
            .map(|rel| {
                let p = base.join(rel);
                RealGrid::read(&p)
            })
            .collect::<Result<Vec<_>>>()?;
        NdviStack::new(months)
    }

    pub fn header(&self) -> &GridHeader {
        &self.months[0].header
    }

    pub fn months(&self) -> &[RealGrid] {
        &self.months
    }
}

/// Per-pixel maximum over the 12 months, ignoring nodata months. A pixel
/// with all 12 months nodata stays nodata.
pub fn peak_ndvi(stack: &NdviStack) -> RealGrid {
    let header = *stack.header();
    let mut peaks: Vec<Option<f64>> = vec![None; header.len()];
    for layer in stack.months() {
        for (peak, value) in peaks.iter_mut().zip(layer.cells()) {
            if let Some(v) = value {
                *peak = Some(match peak {
                    Some(p) => p.max(*v),
                    None => *v,
                });
            }
        }
    }
    RealGrid::new(header, peaks).expect("peak grid inherits a valid header")
}

/// Threshold multiplier for the anomaly filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub n_sigma: f64,
}

impl FilterConfig {
    pub fn new(n_sigma: f64) -> Result<Self> {
        if !n_sigma.is_finite() || n_sigma < 0.0 {
            return Err(Error::Invalid(format!("n_sigma must be finite and >= 0, got {n_sigma}")));
        }
        Ok(FilterConfig { n_sigma })
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { n_sigma: 3.5 }
    }
}

/// Mean and population standard deviation of peak NDVI over crop pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakStats {
    pub mu: f64,
    pub sigma: f64,
    pub count: u64,
}

/// Statistics over pixels mapped as crop (code 1) whose peak is valid.
pub fn peak_stats(crop_map: &ClassGrid, peaks: &RealGrid) -> Result<PeakStats> {
    require_same_header(&crop_map.header, &peaks.header)?;
    require_binary(crop_map, "crop map")?;
    let mut sum = 0.0;
    let mut count = 0u64;
    for (class, peak) in crop_map.cells().iter().zip(peaks.cells()) {
        if *class == Some(1) {
            if let Some(v) = peak {
                sum += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyStatistics);
    }
    let mu = sum / count as f64;
    let mut ssq = 0.0;
    for (class, peak) in crop_map.cells().iter().zip(peaks.cells()) {
        if *class == Some(1) {
            if let Some(v) = peak {
                ssq += (v - mu) * (v - mu);
            }
        }
    }
    Ok(PeakStats {
        mu,
        sigma: (ssq / count as f64).sqrt(),
        count,
    })
}

/// Reclassify crop pixels whose peak NDVI is strictly below mu - n*sigma to
/// non-crop. Statistics come from the input map in a single pass; the
/// filter is not iterated. Returns the filtered map and the number of
/// reclassified pixels.
pub fn apply_ndvi_filter(crop_map: &ClassGrid, peaks: &RealGrid, cfg: FilterConfig) -> Result<(ClassGrid, u64)> {
    let stats = peak_stats(crop_map, peaks)?;
    let threshold = stats.mu - cfg.n_sigma * stats.sigma;
    let mut cells = Vec::with_capacity(crop_map.header.len());
    let mut reclassified = 0u64;
    for (class, peak) in crop_map.cells().iter().zip(peaks.cells()) {
        let out = match (class, peak) {
            (Some(1), Some(v)) if *v < threshold => {
                reclassified += 1;
                Some(0)
            }
            _ => *class,
        };
        cells.push(out);
    }
    Ok((ClassGrid::new(crop_map.header, cells)?, reclassified))
}

/// One point of the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n_sigma: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// For each threshold, apply the filter and score the filtered map against
/// binary reference points (`true` = crop).
pub fn threshold_sweep(
    crop_map: &ClassGrid,
    peaks: &RealGrid,
    labels: &[(GeoPoint, bool)],
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>> {
    if labels.is_empty() {
        return Err(Error::Invalid("threshold sweep needs at least one labeled point".into()));
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for &n_sigma in thresholds {
        let (filtered, _) = apply_ndvi_filter(crop_map, peaks, FilterConfig::new(n_sigma)?)?;
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (point, is_crop) in labels {
            let mapped_crop = filtered.class_at(point)? == 1;
            match (is_crop, mapped_crop) {
                (true, true) => tp += 1,
                (true, false) => fn_ += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
            }
        }
        if tp + fn_ == 0 || fp + tn == 0 {
            return Err(Error::Invalid("threshold sweep needs both crop and noncrop labels".into()));
        }
        out.push(SweepPoint {
            n_sigma,
            tpr: tp as f64 / (tp + fn_) as f64,
            fpr: fp as f64 / (fp + tn) as f64,
        });
    }
    Ok(out)
}

/// The threshold grid used for the sweep when none is given.
pub const DEFAULT_SWEEP_THRESHOLDS: [f64; 9] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
