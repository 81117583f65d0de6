//! Reproduction drivers: per-zone estimation, inside/outside-buffer
//! comparison with percentage-of-area intervals, the equal-sample-size
//! robustness experiment, and external land-cover map comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::crops::{ChangeMap, CropLabel};
use crate::error::{Error, Result};
use crate::estimate::{
    binary_accuracy, build_confusion, estimate_area, stratified_accuracy, AccuracyReport,
    AreaEstimate, BinaryCounts, BootstrapConfig, Labeling, MetricValue,
};
use crate::geo::{in_buffer, BufferSet, GeoPoint, MultiPolygon};
use crate::grid::{stratum_areas, ClassGrid, PixelArea};
use crate::rng::substream;
use crate::sampling::SampleRecord;

/// A named membership predicate over pixel centers and sample locations.
#[derive(Debug, Clone)]
pub enum RegionSpec {
    WholeMap { name: String },
    Region { name: String, region: MultiPolygon },
    BufferInside { name: String, buffer: BufferSet },
    BufferOutside { name: String, region: MultiPolygon, buffer: BufferSet },
}

impl RegionSpec {
    pub fn name(&self) -> &str {
        match self {
            RegionSpec::WholeMap { name }
            | RegionSpec::Region { name, .. }
            | RegionSpec::BufferInside { name, .. }
            | RegionSpec::BufferOutside { name, .. } => name,
        }
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        match self {
            RegionSpec::WholeMap { .. } => true,
            RegionSpec::Region { region, .. } => region.contains(p),
            RegionSpec::BufferInside { buffer, .. } => in_buffer(p, buffer),
            RegionSpec::BufferOutside { region, buffer, .. } => {
                region.contains(p) && !in_buffer(p, buffer)
            }
        }
    }
}

/// Estimates for one region; each piece fails independently so one
/// infeasible region or labeling never aborts the batch.
#[derive(Debug)]
pub struct RegionEstimates {
    pub region: String,
    pub stratum_areas: BTreeMap<u8, f64>,
    pub n_samples: usize,
    pub change: Result<AreaEstimate>,
    pub change_accuracy: Result<AccuracyReport>,
    pub annual_2020: Result<AreaEstimate>,
    pub annual_2021: Result<AreaEstimate>,
}

/// Clip the map and filter the samples to each region, then run the change
/// and annual estimators.
pub fn regional_estimates(
    change_map: &ChangeMap,
    samples: &[SampleRecord],
    regions: &[RegionSpec],
    pixel_area: &PixelArea,
) -> Vec<RegionEstimates> {
    regions
        .iter()
        .map(|spec| {
            let mask = |p: &GeoPoint| spec.contains(p);
            let areas = stratum_areas(&change_map.grid, pixel_area, Some(&mask));
            let included: Vec<SampleRecord> = samples
                .iter()
                .filter(|s| spec.contains(&s.location))
                .cloned()
                .collect();
            let change_cm = build_confusion(&included, Labeling::Change, &areas, None);
            let change = change_cm.as_ref().map(estimate_area).map_err(clone_err);
            let change_accuracy = change_cm
                .and_then(|cm| stratified_accuracy(&cm));
            let annual_2020 = build_confusion(&included, Labeling::Annual(2020), &areas, None)
                .map(|cm| estimate_area(&cm));
            let annual_2021 = build_confusion(&included, Labeling::Annual(2021), &areas, None)
                .map(|cm| estimate_area(&cm));
            RegionEstimates {
                region: spec.name().to_string(),
                stratum_areas: areas,
                n_samples: included.len(),
                change,
                change_accuracy,
                annual_2020,
                annual_2021,
            }
        })
        .collect()
}

// Error is not Clone; estimates keep their own copy of the message.
fn clone_err(e: &Error) -> Error {
    Error::Invalid(e.to_string())
}

/// One side of the buffer comparison.
#[derive(Debug)]
pub struct SideComparison {
    pub name: String,
    pub stratum_areas: BTreeMap<u8, f64>,
    pub n_samples: usize,
    pub outcome: Result<SideEstimate>,
}

#[derive(Debug, Clone)]
pub struct SideEstimate {
    pub estimate: AreaEstimate,
    /// Per class: (label, low %, high %) of the side's total area, from the
    /// CI endpoints floored at zero and rounded to whole percent.
    pub percent_intervals: Vec<(String, u32, u32)>,
}

#[derive(Debug)]
pub struct BufferComparison {
    pub radius_m: f64,
    pub inside: SideComparison,
    pub outside: SideComparison,
}

fn percent_intervals(estimate: &AreaEstimate) -> Vec<(String, u32, u32)> {
    let total = estimate.total_area_ha;
    estimate
        .classes
        .iter()
        .map(|c| {
            let lo = ((c.area_ha - c.ci95_ha).max(0.0) / total * 100.0).round() as u32;
            let hi = ((c.area_ha + c.ci95_ha).max(0.0) / total * 100.0).round() as u32;
            (c.label.clone(), lo, hi)
        })
        .collect()
}

fn estimate_side(
    change_map: &ChangeMap,
    samples: &[SampleRecord],
    spec: &RegionSpec,
    pixel_area: &PixelArea,
) -> SideComparison {
    let mask = |p: &GeoPoint| spec.contains(p);
    let areas = stratum_areas(&change_map.grid, pixel_area, Some(&mask));
    let included: Vec<SampleRecord> = samples
        .iter()
        .filter(|s| spec.contains(&s.location))
        .cloned()
        .collect();
    let outcome = build_confusion(&included, Labeling::Change, &areas, None).map(|cm| {
        let estimate = estimate_area(&cm);
        let percent = percent_intervals(&estimate);
        SideEstimate {
            estimate,
            percent_intervals: percent,
        }
    });
    SideComparison {
        name: spec.name().to_string(),
        stratum_areas: areas,
        n_samples: included.len(),
        outcome,
    }
}

/// Change-area estimates inside a dissolved event buffer versus the rest of
/// the region, with percent-of-side-area intervals for comparison across
/// the differently sized sides.
pub fn buffer_comparison(
    change_map: &ChangeMap,
    samples: &[SampleRecord],
    events: &[GeoPoint],
    radius_m: f64,
    region: &MultiPolygon,
    pixel_area: &PixelArea,
) -> Result<BufferComparison> {
    let buffer = BufferSet::new(events.to_vec(), radius_m)?;
    let inside = estimate_side(
        change_map,
        samples,
        &RegionSpec::BufferInside {
            name: "inside_buffer".into(),
            buffer: buffer.clone(),
        },
        pixel_area,
    );
    let outside = estimate_side(
        change_map,
        samples,
        &RegionSpec::BufferOutside {
            name: "outside_buffer".into(),
            region: region.clone(),
            buffer,
        },
        pixel_area,
    );
    Ok(BufferComparison {
        radius_m,
        inside,
        outside,
    })
}

/// Per-seed result of the equal-sample-size experiment.
#[derive(Debug)]
pub struct SubsampleRow {
    pub seed: u64,
    pub outcome: Result<SubsampleEstimate>,
}

#[derive(Debug, Clone)]
pub struct SubsampleEstimate {
    pub loss_area_ha: f64,
    pub loss_ci95_ha: f64,
    pub overall: MetricValue,
    pub users_loss: MetricValue,
    pub producers_loss: MetricValue,
}

#[derive(Debug)]
pub struct SubsampleResult {
    pub n_sub: usize,
    pub rows: Vec<SubsampleRow>,
    pub median_area_ha: f64,
    pub median_ci95_ha: f64,
    pub mean_area_ha: f64,
    pub mean_ci95_ha: f64,
    pub infeasible: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Repeatedly draw `n_sub` of the pooled samples without replacement (one
/// independent substream per seed, so the seed list order is irrelevant)
/// and re-estimate the loss class. Stratum identities are retained for
/// weighting; the draw itself is not re-stratified. Infeasible seeds are
/// recorded, not fatal.
pub fn subsample_experiment(
    samples: &[SampleRecord],
    n_sub: usize,
    seeds: &[u64],
    stratum_areas: &BTreeMap<u8, f64>,
) -> Result<SubsampleResult> {
    if n_sub > samples.len() {
        return Err(Error::Invalid(format!(
            "subsample size {n_sub} exceeds the {} available samples",
            samples.len()
        )));
    }
    if n_sub == 0 || seeds.is_empty() {
        return Err(Error::Invalid("subsample experiment needs n_sub > 0 and at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rng = substream(seed, "subsample");
        let mut indices: Vec<usize> = (0..samples.len()).collect();
        for i in 0..n_sub {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        let subset: Vec<SampleRecord> = indices[..n_sub].iter().map(|&i| samples[i].clone()).collect();
        let outcome = build_confusion(&subset, Labeling::Change, stratum_areas, None).and_then(|cm| {
            let estimate = estimate_area(&cm);
            let loss = estimate
                .class("loss")
                .ok_or_else(|| Error::Invalid("no loss class in estimate".into()))?;
            let accuracy = stratified_accuracy(&cm)?;
            let loss_acc = accuracy
                .class("loss")
                .ok_or_else(|| Error::Invalid("no loss class in accuracy report".into()))?;
            Ok(SubsampleEstimate {
                loss_area_ha: loss.area_ha,
                loss_ci95_ha: loss.ci95_ha,
                overall: accuracy.overall,
                users_loss: loss_acc.users,
                producers_loss: loss_acc.producers,
            })
        });
        rows.push(SubsampleRow { seed, outcome });
    }

    let feasible: Vec<&SubsampleEstimate> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    if feasible.is_empty() {
        return Err(Error::Invalid("every subsample seed was estimation-infeasible".into()));
    }
    let mut areas: Vec<f64> = feasible.iter().map(|e| e.loss_area_ha).collect();
    let mut cis: Vec<f64> = feasible.iter().map(|e| e.loss_ci95_ha).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(SubsampleResult {
        n_sub,
        infeasible: rows.len() - feasible.len(),
        median_area_ha: median(&mut areas),
        median_ci95_ha: median(&mut cis),
        mean_area_ha: mean(&areas),
        mean_ci95_ha: mean(&cis),
        rows,
    })
}

/// An external land-cover map with its native-code mapping to crop/noncrop.
#[derive(Debug, Clone)]
pub struct CandidateMap {
    pub name: String,
    pub grid: ClassGrid,
    pub crop_codes: BTreeSet<u8>,
    pub noncrop_codes: BTreeSet<u8>,
}

#[derive(Debug)]
pub struct MapComparison {
    pub name: String,
    pub counts: BinaryCounts,
    pub report: AccuracyReport,
}

impl MapComparison {
    pub fn f1(&self) -> f64 {
        self.counts.f1()
    }
}

/// Score candidate maps against an independent labeled test set with
/// unstratified binary metrics, sorted by descending F1.
pub fn compare_maps(
    maps: &[CandidateMap],
    points: &[(GeoPoint, CropLabel)],
    cfg: &BootstrapConfig,
) -> Result<Vec<MapComparison>> {
    let mut out = Vec::with_capacity(maps.len());
    for map in maps {
        let mut counts = BinaryCounts { tn: 0, fp: 0, fn_: 0, tp: 0 };
        for (point, label) in points {
            let code = map.grid.class_at(point)?;
            let mapped_crop = if map.crop_codes.contains(&code) {
                true
            } else if map.noncrop_codes.contains(&code) {
                false
            } else {
                return Err(Error::UnmappedClass {
                    map: map.name.clone(),
                    code,
                });
            };
            match (*label == CropLabel::Crop, mapped_crop) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fn_ += 1,
                (false, true) => counts.fp += 1,
                (false, false) => counts.tn += 1,
            }
        }
        let report = binary_accuracy(&counts, cfg)?;
        out.push(MapComparison {
            name: map.name.clone(),
            counts,
            report,
        });
    }
    out.sort_by(|a, b| b.f1().partial_cmp(&a.f1()).unwrap().then(a.name.cmp(&b.name)));
    Ok(out)
}

#[derive(Deserialize)]
struct MapManifestEntry {
    name: String,
    path: String,
    crop_codes: Vec<u8>,
    noncrop_codes: Vec<u8>,
}

/// Load candidate maps from a JSON manifest:
/// `[{"name": ..., "path": ..., "crop_codes": [...], "noncrop_codes": [...]}]`.
/// Relative paths resolve against the manifest's directory.
pub fn load_map_manifest(path: &Path) -> Result<Vec<CandidateMap>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<MapManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}: invalid map manifest: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            Ok(CandidateMap {
                grid: ClassGrid::read(&base.join(&e.path))?,
                name: e.name,
                crop_codes: e.crop_codes.into_iter().collect(),
                noncrop_codes: e.noncrop_codes.into_iter().collect(),
            })
        })
        .collect()
}
