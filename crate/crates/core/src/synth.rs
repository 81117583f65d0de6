//! Synthetic-landscape Monte Carlo harness: generates a patchy truth map
//! and an error-perturbed mapped version, then validates estimator
//! unbiasedness and CI coverage end-to-end through sampling + estimation.

use rand::Rng;

use crate::crops::{ChangeClass, ChangeMap};
use crate::error::{Error, Result};
use crate::estimate::{build_confusion, estimate_area, Labeling};
use crate::grid::{stratum_areas, ClassGrid, GridHeader, PixelArea};
use crate::rng::{derive_seed, substream};
use crate::sampling::{allocate, draw_sample};

/// Parameters of a synthetic landscape. Truth classes are drawn per patch
/// (square blocks of `patch_size` pixels) so strata resemble fields rather
/// than salt-and-pepper noise; the mapped grid perturbs the truth per pixel
/// through the row-stochastic error matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub ncols: usize,
    pub nrows: usize,
    /// True class proportions over the four change classes; sums to 1.
    pub proportions: [f64; 4],
    /// error_matrix[t][m] = probability a truth-t pixel is mapped as m.
    pub error_matrix: [[f64; 4]; 4],
    pub seed: u64,
    pub patch_size: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(Error::Invalid("synthetic grid must be at least 1x1".into()));
        }
        if self.patch_size == 0 {
            return Err(Error::Invalid("patch size must be >= 1".into()));
        }
        let psum: f64 = self.proportions.iter().sum();
        if self.proportions.iter().any(|p| !(0.0..=1.0).contains(p)) || (psum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("class proportions must sum to 1, got {psum}")));
        }
        for (t, row) in self.error_matrix.iter().enumerate() {
            let rsum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (rsum - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!("error matrix row {t} must sum to 1, got {rsum}")));
            }
        }
        Ok(())
    }

    /// A symmetric confusion structure: each class keeps 1 - rate and
    /// spreads rate evenly over the other three.
    pub fn symmetric_error(rate: f64) -> [[f64; 4]; 4] {
        let off = rate / 3.0;
        let mut e = [[off; 4]; 4];
        for (t, row) in e.iter_mut().enumerate() {
            row[t] = 1.0 - rate;
        }
        e
    }
}

fn draw_class(rng: &mut impl Rng, probabilities: &[f64; 4]) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u8;
        }
    }
    3
}

/// Generate the (truth, mapped) pair. Deterministic per seed: the truth
/// and mapped draws use independent substreams.
pub fn generate(spec: &SynthSpec) -> Result<(ChangeMap, ChangeMap)> {
    spec.validate()?;
    let header = GridHeader::new(spec.ncols, spec.nrows, 39.0, 13.0, 1e-4, -9999.0)?;

    let mut truth_rng = substream(spec.seed, "truth");
    let patch_cols = spec.ncols.div_ceil(spec.patch_size);
    let patch_rows = spec.nrows.div_ceil(spec.patch_size);
    let patch_classes: Vec<u8> = (0..patch_rows * patch_cols)
        .map(|_| draw_class(&mut truth_rng, &spec.proportions))
        .collect();
    let truth = ClassGrid::from_fn(header, |r, c| {
        Some(patch_classes[(r / spec.patch_size) * patch_cols + c / spec.patch_size])
    });

    let mut map_rng = substream(spec.seed, "mapped");
    let mapped = ClassGrid::from_fn(header, |r, c| {
        let t = truth.get(r, c).unwrap() as usize;
        Some(draw_class(&mut map_rng, &spec.error_matrix[t]))
    });

    Ok((ChangeMap::from_grid(truth)?, ChangeMap::from_grid(mapped)?))
}

/// One Monte Carlo repetition's estimates: (area, ci95, covered) per class.
#[derive(Debug, Clone, Copy)]
pub struct RepEstimate {
    pub rep: usize,
    pub classes: [(f64, f64, bool); 4],
}

#[derive(Debug, Clone, Copy)]
pub struct ClassCoverage {
    pub class: ChangeClass,
    pub true_area_ha: f64,
    pub mean_area_ha: f64,
    pub bias_ha: f64,
    pub relative_bias: f64,
    /// Fraction of feasible reps whose 95% CI contains the true area.
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct CoverageTrial {
    pub per_class: [ClassCoverage; 4],
    pub reps: Vec<RepEstimate>,
    pub infeasible: usize,
}

/// Repeatedly draw a stratified sample of the mapped grid (strata = mapped
/// classes, truth as the reference) and estimate class areas. Bias is
/// measured against the realized truth map's pixel-count areas.
pub fn coverage_trial(
    spec: &SynthSpec,
    n_samples: usize,
    prealloc_per_change: usize,
    reps: usize,
) -> Result<CoverageTrial> {
    if reps == 0 {
        return Err(Error::Invalid("coverage trial needs at least one rep".into()));
    }
    let (truth, mapped) = generate(spec)?;
    let pixel_area = PixelArea::constant(0.01)?;
    let mapped_areas = stratum_areas(&mapped.grid, &pixel_area, None);
    let true_areas_map = stratum_areas(&truth.grid, &pixel_area, None);
    let true_areas: [f64; 4] =
        std::array::from_fn(|k| true_areas_map.get(&(k as u8)).copied().unwrap_or(0.0));

    let plan = allocate(n_samples, prealloc_per_change, &mapped_areas)?;

    let mut rep_rows: Vec<RepEstimate> = Vec::with_capacity(reps);
    let mut infeasible = 0usize;
    for rep in 0..reps {
        let rep_seed = derive_seed(spec.seed, &format!("rep-{rep}"));
        let mut records = draw_sample(&mapped, &plan, rep_seed)?;
        for record in &mut records {
            let t = truth.grid.class_at(&record.location)?;
            let class = ChangeClass::from_code(t)
                .ok_or_else(|| Error::Invalid(format!("truth map holds class code {t}")))?;
            let (y0, y1) = class.annual_labels();
            record.ref_2020 = Some(y0);
            record.ref_2021 = Some(y1);
        }
        let cm = match build_confusion(&records, Labeling::Change, &mapped_areas, None) {
            Ok(cm) => cm,
            Err(_) => {
                infeasible += 1;
                continue;
            }
        };
        let est = estimate_area(&cm);
        let classes = std::array::from_fn(|k| {
            let class = est.class(ChangeClass::ALL[k].label()).expect("all four classes estimated");
            let covered = (class.area_ha - true_areas[k]).abs() <= class.ci95_ha;
            (class.area_ha, class.ci95_ha, covered)
        });
        rep_rows.push(RepEstimate { rep, classes });
    }

    if rep_rows.is_empty() {
        return Err(Error::Invalid("every rep was estimation-infeasible".into()));
    }
    let n_ok = rep_rows.len() as f64;
    let per_class = std::array::from_fn(|k| {
        let mean = rep_rows.iter().map(|r| r.classes[k].0).sum::<f64>() / n_ok;
        let covered = rep_rows.iter().filter(|r| r.classes[k].2).count() as f64 / n_ok;
        let bias = mean - true_areas[k];
        ClassCoverage {
            class: ChangeClass::ALL[k],
            true_area_ha: true_areas[k],
            mean_area_ha: mean,
            bias_ha: bias,
            relative_bias: if true_areas[k] > 0.0 { bias / true_areas[k] } else { 0.0 },
            coverage: covered,
        }
    });

    Ok(CoverageTrial {
        per_class,
        reps: rep_rows,
        infeasible,
    })
}
