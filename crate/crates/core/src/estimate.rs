//! Stratified design-based estimators: area-proportion confusion matrices,
//! class area estimates with standard errors, and accuracy metrics.
//!
//! Rows of a confusion matrix are map strata i with areas A_i and weights
//! W_i = A_i / A_total; columns are reference classes j with sample counts
//! n_ij. The estimators are the standard good-practice forms:
//!
//!   p_hat_j = sum_i W_i * n_ij / n_i
//!   S(p_hat_j) = sqrt( sum_i W_i^2 * (n_ij/n_i)(1 - n_ij/n_i) / (n_i - 1) )
//!
//! with 95% intervals at z = 1.96. Strata with zero weight drop out of all
//! sums; strata with positive weight and fewer than two samples abort the
//! estimate rather than silently reweighting the design.

use std::collections::BTreeMap;

use rand::Rng;

use crate::crops::{ChangeClass, CropLabel};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::rng::substream;
use crate::sampling::SampleRecord;

pub const Z_95: f64 = 1.96;

/// Which reference field of the samples to tabulate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labeling {
    /// Four-class change labels derived from the two annual labels.
    Change,
    /// Binary crop/noncrop labels for one year (2020 or 2021).
    Annual(u16),
}

/// Stratified confusion matrix with stratum areas attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    stratum_labels: Vec<String>,
    ref_labels: Vec<String>,
    counts: Vec<Vec<u64>>,
    stratum_areas: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn new(
        stratum_labels: Vec<String>,
        ref_labels: Vec<String>,
        counts: Vec<Vec<u64>>,
        stratum_areas: Vec<f64>,
    ) -> Result<Self> {
        if stratum_labels.is_empty() || ref_labels.is_empty() {
            return Err(Error::Invalid("confusion matrix needs at least one stratum and one reference class".into()));
        }
        if counts.len() != stratum_labels.len() || stratum_areas.len() != stratum_labels.len() {
            return Err(Error::Invalid("confusion matrix rows do not match stratum labels".into()));
        }
        if counts.iter().any(|row| row.len() != ref_labels.len()) {
            return Err(Error::Invalid("confusion matrix columns do not match reference labels".into()));
        }
        for (label, area) in stratum_labels.iter().zip(&stratum_areas) {
            if !area.is_finite() || *area < 0.0 {
                return Err(Error::Invalid(format!("stratum {label} has invalid area {area}")));
            }
        }
        let total_area: f64 = stratum_areas.iter().sum();
        if total_area <= 0.0 {
            return Err(Error::Invalid("total area must be positive".into()));
        }
        let cm = ConfusionMatrix {
            stratum_labels,
            ref_labels,
            counts,
            stratum_areas,
        };
        for i in 0..cm.stratum_labels.len() {
            let w = cm.stratum_areas[i] / total_area;
            let n = cm.row_total(i);
            if w > 0.0 && n < 2 {
                return Err(Error::Infeasible {
                    stratum: cm.stratum_labels[i].clone(),
                    weight: w,
                    n: n as usize,
                });
            }
        }
        Ok(cm)
    }

    pub fn stratum_labels(&self) -> &[String] {
        &self.stratum_labels
    }

    pub fn ref_labels(&self) -> &[String] {
        &self.ref_labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn stratum_areas(&self) -> &[f64] {
        &self.stratum_areas
    }

    pub fn total_area(&self) -> f64 {
        self.stratum_areas.iter().sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        let total = self.total_area();
        self.stratum_areas.iter().map(|a| a / total).collect()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn total_samples(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.row_total(i)).sum()
    }

    pub fn is_square(&self) -> bool {
        self.stratum_labels == self.ref_labels
    }

    /// Cell (i, j) = W_i * n_ij / n_i. Rows sum to W_i; the grand total is 1.
    pub fn proportion_matrix(&self) -> Vec<Vec<f64>> {
        let weights = self.weights();
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n = self.row_total(i);
                row.iter()
                    .map(|&c| {
                        if n == 0 {
                            0.0
                        } else {
                            weights[i] * (c as f64 / n as f64)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Per-reference-class area estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEstimate {
    pub label: String,
    pub proportion: f64,
    pub area_ha: f64,
    pub se_proportion: f64,
    pub ci95_ha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaEstimate {
    pub total_area_ha: f64,
    pub classes: Vec<ClassEstimate>,
}

impl AreaEstimate {
    pub fn class(&self, label: &str) -> Option<&ClassEstimate> {
        self.classes.iter().find(|c| c.label == label)
    }
}

/// Unbiased stratified area estimate per reference class, with standard
/// errors and 95% CI half-widths in hectares.
pub fn estimate_area(cm: &ConfusionMatrix) -> AreaEstimate {
    let weights = cm.weights();
    let total_area = cm.total_area();
    let mut classes = Vec::with_capacity(cm.ref_labels().len());
    for (j, label) in cm.ref_labels().iter().enumerate() {
        let mut area = 0.0;
        let mut var = 0.0;
        for (i, w) in weights.iter().enumerate() {
            let n_i = cm.row_total(i);
            if n_i == 0 {
                continue; // zero-weight stratum
            }
            let share = cm.counts()[i][j] as f64 / n_i as f64;
            area += cm.stratum_areas()[i] * share;
            if n_i >= 2 {
                var += w * w * share * (1.0 - share) / (n_i as f64 - 1.0);
            }
        }
        let se = var.sqrt();
        classes.push(ClassEstimate {
            label: label.clone(),
            proportion: area / total_area,
            area_ha: area,
            se_proportion: se,
            ci95_ha: Z_95 * total_area * se,
        });
    }
    AreaEstimate {
        total_area_ha: total_area,
        classes,
    }
}

fn change_areas_vec(stratum_areas: &BTreeMap<u8, f64>) -> Vec<f64> {
    ChangeClass::ALL
        .iter()
        .map(|c| stratum_areas.get(&c.code()).copied().unwrap_or(0.0))
        .collect()
}

/// Tabulate samples into a stratified confusion matrix. Samples without a
/// resolved label for the requested `labeling` are excluded; `restrict`
/// drops samples whose location fails the predicate (the stratum areas
/// passed in must already be restricted the same way).
pub fn build_confusion(
    samples: &[SampleRecord],
    labeling: Labeling,
    stratum_areas: &BTreeMap<u8, f64>,
    restrict: Option<&dyn Fn(&GeoPoint) -> bool>,
) -> Result<ConfusionMatrix> {
    let ref_labels: Vec<String> = match labeling {
        Labeling::Change => ChangeClass::ALL.iter().map(|c| c.label().to_string()).collect(),
        Labeling::Annual(2020) | Labeling::Annual(2021) => {
            vec![CropLabel::NonCrop.as_str().to_string(), CropLabel::Crop.as_str().to_string()]
        }
        Labeling::Annual(year) => {
            return Err(Error::Invalid(format!("reference labels exist for 2020 and 2021, not {year}")));
        }
    };
    let mut counts = vec![vec![0u64; ref_labels.len()]; 4];
    for sample in samples {
        if let Some(m) = restrict {
            if !m(&sample.location) {
                continue;
            }
        }
        let j = match labeling {
            Labeling::Change => match sample.ref_change() {
                Some(class) => class.code() as usize,
                None => continue,
            },
            Labeling::Annual(year) => match sample.ref_year(year) {
                Some(CropLabel::NonCrop) => 0,
                Some(CropLabel::Crop) => 1,
                None => continue,
            },
        };
        counts[sample.stratum.code() as usize][j] += 1;
    }
    ConfusionMatrix::new(
        ChangeClass::ALL.iter().map(|c| c.label().to_string()).collect(),
        ref_labels,
        counts,
        change_areas_vec(stratum_areas),
    )
}

/// Annual crop/noncrop area estimate for one year, stratified by the change
/// map classes.
pub fn estimate_annual(
    samples: &[SampleRecord],
    year: u16,
    stratum_areas: &BTreeMap<u8, f64>,
) -> Result<AreaEstimate> {
    let cm = build_confusion(samples, Labeling::Annual(year), stratum_areas, None)?;
    Ok(estimate_area(&cm))
}

/// A metric with the half-width of its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub label: String,
    pub users: MetricValue,
    pub producers: MetricValue,
    pub f1: Option<MetricValue>,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub overall: MetricValue,
    pub classes: Vec<ClassAccuracy>,
}

impl AccuracyReport {
    pub fn class(&self, label: &str) -> Option<&ClassAccuracy> {
        self.classes.iter().find(|c| c.label == label)
    }
}

/// Raw confusion counts of a binary map against an unstratified test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tp: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn overall_accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn tpr(&self) -> f64 {
        self.recall()
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// Seeded percentile bootstrap settings for the unstratified metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            seed: 0,
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Half-width of the central 95% percentile interval, ignoring resamples
/// where the metric was undefined.
fn bootstrap_half_width(values: &mut Vec<f64>) -> f64 {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (percentile(values, 0.975) - percentile(values, 0.025)) / 2.0
}

/// Unstratified binary accuracy (precision / recall / F1 / OA / TPR / FPR)
/// with percentile-bootstrap uncertainties.
pub fn binary_accuracy(counts: &BinaryCounts, cfg: &BootstrapConfig) -> Result<AccuracyReport> {
    let n = counts.total();
    if n == 0 {
        return Err(Error::Invalid("binary accuracy needs at least one test point".into()));
    }
    if counts.tp + counts.fn_ == 0 || counts.tn + counts.fp == 0 {
        return Err(Error::Invalid("binary accuracy needs both crop and noncrop reference points".into()));
    }

    let mut rng = substream(cfg.seed, "bootstrap");
    let cutoffs = [
        counts.tn,
        counts.tn + counts.fp,
        counts.tn + counts.fp + counts.fn_,
    ];
    let mut f1s = Vec::with_capacity(cfg.resamples);
    let mut oas = Vec::with_capacity(cfg.resamples);
    let mut uas = Vec::with_capacity(cfg.resamples);
    let mut pas = Vec::with_capacity(cfg.resamples);
    for _ in 0..cfg.resamples {
        let mut re = BinaryCounts { tn: 0, fp: 0, fn_: 0, tp: 0 };
        for _ in 0..n {
            let draw = rng.random_range(0..n);
            if draw < cutoffs[0] {
                re.tn += 1;
            } else if draw < cutoffs[1] {
                re.fp += 1;
            } else if draw < cutoffs[2] {
                re.fn_ += 1;
            } else {
                re.tp += 1;
            }
        }
        f1s.push(re.f1());
        oas.push(re.overall_accuracy());
        uas.push(re.precision());
        pas.push(re.recall());
    }

    Ok(AccuracyReport {
        overall: MetricValue {
            value: counts.overall_accuracy(),
            half_width: bootstrap_half_width(&mut oas),
        },
        classes: vec![ClassAccuracy {
            label: CropLabel::Crop.as_str().to_string(),
            users: MetricValue {
                value: counts.precision(),
                half_width: bootstrap_half_width(&mut uas),
            },
            producers: MetricValue {
                value: counts.recall(),
                half_width: bootstrap_half_width(&mut pas),
            },
            f1: Some(MetricValue {
                value: counts.f1(),
                half_width: bootstrap_half_width(&mut f1s),
            }),
            tpr: counts.tpr(),
            fpr: counts.fpr(),
        }],
    })
}

/// Stratified accuracy for a square confusion matrix: overall and user's
/// accuracy with analytic variances, producer's accuracy with the
/// good-practice variance (using stratum areas as the N_i totals), plus
/// raw-count one-vs-rest TPR/FPR per class.
pub fn stratified_accuracy(cm: &ConfusionMatrix) -> Result<AccuracyReport> {
    if !cm.is_square() {
        return Err(Error::Invalid("stratified accuracy needs strata equal to reference classes".into()));
    }
    let k = cm.stratum_labels().len();
    let weights = cm.weights();
    let areas = cm.stratum_areas();
    let proportions = cm.proportion_matrix();
    let total_samples = cm.total_samples();

    let mut overall = 0.0;
    let mut v_overall = 0.0;
    for i in 0..k {
        overall += proportions[i][i];
        let n_i = cm.row_total(i);
        if n_i >= 2 {
            let ua = cm.counts()[i][i] as f64 / n_i as f64;
            v_overall += weights[i] * weights[i] * ua * (1.0 - ua) / (n_i as f64 - 1.0);
        }
    }

    let mut classes = Vec::with_capacity(k);
    for j in 0..k {
        let n_j = cm.row_total(j);
        let (ua, v_ua) = if n_j >= 2 {
            let ua = cm.counts()[j][j] as f64 / n_j as f64;
            (ua, ua * (1.0 - ua) / (n_j as f64 - 1.0))
        } else {
            (0.0, 0.0)
        };

        // producer's accuracy through the area-weighted column total
        let col: f64 = (0..k).map(|i| proportions[i][j]).sum();
        let pa = if col > 0.0 { proportions[j][j] / col } else { 0.0 };
        let est_col_area: f64 = (0..k)
            .filter(|i| cm.row_total(*i) > 0)
            .map(|i| areas[i] * cm.counts()[i][j] as f64 / cm.row_total(i) as f64)
            .sum();
        let v_pa = if est_col_area > 0.0 && n_j >= 2 {
            let first = areas[j] * areas[j] * (1.0 - pa) * (1.0 - pa) * ua * (1.0 - ua) / (n_j as f64 - 1.0);
            let mut rest = 0.0;
            for (i, area_i) in areas.iter().enumerate() {
                if i == j {
                    continue;
                }
                let n_i = cm.row_total(i);
                if n_i >= 2 {
                    let share = cm.counts()[i][j] as f64 / n_i as f64;
                    rest += area_i * area_i * share * (1.0 - share) / (n_i as f64 - 1.0);
                }
            }
            (first + pa * pa * rest) / (est_col_area * est_col_area)
        } else {
            0.0
        };

        // raw-count one-vs-rest rates
        let col_count: u64 = (0..k).map(|i| cm.counts()[i][j]).sum();
        let tp = cm.counts()[j][j];
        let fp = n_j - tp;
        let neg = total_samples - col_count;
        let tpr = if col_count > 0 { tp as f64 / col_count as f64 } else { 0.0 };
        let fpr = if neg > 0 { fp as f64 / neg as f64 } else { 0.0 };

        classes.push(ClassAccuracy {
            label: cm.stratum_labels()[j].clone(),
            users: MetricValue {
                value: ua,
                half_width: Z_95 * v_ua.sqrt(),
            },
            producers: MetricValue {
                value: pa,
                half_width: Z_95 * v_pa.sqrt(),
            },
            f1: None,
            tpr,
            fpr,
        });
    }

    Ok(AccuracyReport {
        overall: MetricValue {
            value: overall,
            half_width: Z_95 * v_overall.sqrt(),
        },
        classes,
    })
}

/// Dispatch on matrix shape: `square` selects the stratified good-practice
/// metrics; otherwise the matrix must be the raw binary map-vs-test-set
/// tabulation (strata noncrop/crop, no weights applied).
pub fn accuracy_report(cm: &ConfusionMatrix, square: bool, cfg: &BootstrapConfig) -> Result<AccuracyReport> {
    if square {
        stratified_accuracy(cm)
    } else {
        if cm.stratum_labels().len() != 2 || cm.ref_labels().len() != 2 {
            return Err(Error::Invalid("binary accuracy needs a 2x2 matrix (noncrop/crop strata and references)".into()));
        }
        let counts = BinaryCounts {
            tn: cm.counts()[0][0],
            fn_: cm.counts()[0][1],
            fp: cm.counts()[1][0],
            tp: cm.counts()[1][1],
        };
        binary_accuracy(&counts, cfg)
    }
}
