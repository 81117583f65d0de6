//! Stratified sample allocation, deterministic stratified pixel draws, and
//! multi-annotator consensus merging.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::crops::{ChangeClass, ChangeMap, CropLabel};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::rng::substream;

/// Per-stratum sample sizes: pre-allocation to change strata plus a
/// largest-remainder proportional split of the remainder over all strata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPlan {
    pub total_n: usize,
    pub prealloc: BTreeMap<u8, usize>,
    pub per_stratum_n: BTreeMap<u8, usize>,
}

/// Allocate `total_n` samples over the strata in `stratum_areas`.
///
/// Change strata (gain, loss) with nonzero area each receive
/// `prealloc_per_change` samples up front; the remainder is split across
/// all nonzero-area strata proportionally to area with largest-remainder
/// rounding (ties broken by ascending stratum code). Any nonzero-area
/// stratum left below 2 samples is topped up from the largest allocations
/// so the variance estimator stays feasible.
pub fn allocate(
    total_n: usize,
    prealloc_per_change: usize,
    stratum_areas: &BTreeMap<u8, f64>,
) -> Result<AllocationPlan> {
    for (code, area) in stratum_areas {
        if !area.is_finite() || *area < 0.0 {
            return Err(Error::Invalid(format!("stratum {code} has invalid area {area}")));
        }
    }
    let active: Vec<(u8, f64)> = stratum_areas
        .iter()
        .filter(|(_, a)| **a > 0.0)
        .map(|(c, a)| (*c, *a))
        .collect();
    if active.is_empty() {
        return Err(Error::Invalid("all stratum areas are zero".into()));
    }

    let mut prealloc: BTreeMap<u8, usize> = stratum_areas.keys().map(|c| (*c, 0)).collect();
    for (code, _) in &active {
        if ChangeClass::from_code(*code).is_some_and(ChangeClass::is_change) {
            prealloc.insert(*code, prealloc_per_change);
        }
    }
    let prealloc_total: usize = prealloc.values().sum();
    let floor_needed = prealloc_total + 2 * active.len();
    if total_n < floor_needed {
        return Err(Error::Invalid(format!(
            "total_n {total_n} too small: pre-allocation {prealloc_total} plus 2 per stratum needs {floor_needed}"
        )));
    }

    let remainder = total_n - prealloc_total;
    let area_total: f64 = active.iter().map(|(_, a)| a).sum();
    let mut n: BTreeMap<u8, usize> = prealloc.clone();
    let mut fractions: Vec<(u8, f64)> = Vec::with_capacity(active.len());
    let mut assigned = 0usize;
    for (code, area) in &active {
        let quota = remainder as f64 * area / area_total;
        let fl = quota.floor() as usize;
        *n.get_mut(code).unwrap() += fl;
        assigned += fl;
        fractions.push((*code, quota - fl as f64));
    }
    // largest remainder, ties by ascending stratum code
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (code, _) in fractions.iter().take(remainder - assigned) {
        *n.get_mut(code).unwrap() += 1;
    }

    // top up any nonzero-area stratum below 2, taking from the largest
    // allocations (donors stay >= max(2, their prealloc))
    while let Some(deficit) = active.iter().map(|(c, _)| *c).find(|c| n[c] < 2) {
        let donor = active
            .iter()
            .map(|(c, _)| *c)
            .filter(|c| *c != deficit && n[c] > 2.max(prealloc[c]))
            .max_by_key(|c| (n[c], std::cmp::Reverse(*c)))
            .ok_or_else(|| Error::Invalid("cannot satisfy the 2-sample floor per stratum".into()))?;
        *n.get_mut(&donor).unwrap() -= 1;
        *n.get_mut(&deficit).unwrap() += 1;
    }

    debug_assert_eq!(n.values().sum::<usize>(), total_n);
    Ok(AllocationPlan {
        total_n,
        prealloc,
        per_stratum_n: n,
    })
}

/// Consensus state of a reference sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusStatus {
    /// Drawn but not yet annotated.
    Unlabeled,
    Unanimous,
    Majority,
    Adjudicated,
    Unresolved,
}

impl ConsensusStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsensusStatus::Unlabeled => "",
            ConsensusStatus::Unanimous => "unanimous",
            ConsensusStatus::Majority => "majority",
            ConsensusStatus::Adjudicated => "adjudicated",
            ConsensusStatus::Unresolved => "unresolved",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "" => Ok(ConsensusStatus::Unlabeled),
            "unanimous" => Ok(ConsensusStatus::Unanimous),
            "majority" => Ok(ConsensusStatus::Majority),
            "adjudicated" => Ok(ConsensusStatus::Adjudicated),
            "unresolved" => Ok(ConsensusStatus::Unresolved),
            other => Err(Error::Invalid(format!("unknown consensus status {other:?}"))),
        }
    }
}

/// One annotator's answer for one sample and year.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub sample_id: u64,
    pub annotator: String,
    pub year: u16,
    pub label: CropLabel,
}

/// An expert group's final call for a tied (sample, year).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjudicationRecord {
    pub sample_id: u64,
    pub year: u16,
    pub label: CropLabel,
}

/// One reference point of the stratified sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: u64,
    pub location: GeoPoint,
    pub stratum: ChangeClass,
    pub ref_2020: Option<CropLabel>,
    pub ref_2021: Option<CropLabel>,
    pub annotator_labels: Vec<AnnotationRecord>,
    pub consensus_status: ConsensusStatus,
}

impl SampleRecord {
    /// Reference label for one year.
    pub fn ref_year(&self, year: u16) -> Option<CropLabel> {
        match year {
            2020 => self.ref_2020,
            2021 => self.ref_2021,
            _ => None,
        }
    }

    /// Reference change class, defined when both years are resolved.
    pub fn ref_change(&self) -> Option<ChangeClass> {
        Some(ChangeClass::from_annual(self.ref_2020?, self.ref_2021?))
    }
}

/// Draw the planned number of pixels per stratum, uniformly without
/// replacement. Locations are pixel centers. Each stratum uses an
/// independent substream derived from (seed, stratum code), so the result
/// does not depend on stratum order or threading.
pub fn draw_sample(map: &ChangeMap, plan: &AllocationPlan, seed: u64) -> Result<Vec<SampleRecord>> {
    let header = &map.grid.header;
    let mut records = Vec::with_capacity(plan.total_n);
    let mut next_id = 0u64;
    for (code, wanted) in &plan.per_stratum_n {
        if *wanted == 0 {
            continue;
        }
        let stratum = ChangeClass::from_code(*code)
            .ok_or_else(|| Error::Invalid(format!("plan names stratum code {code} outside 0..=3")))?;
        let mut pixels: Vec<usize> = map
            .grid
            .cells()
            .iter()
            .enumerate()
            .filter_map(|(i, c)| (*c == Some(*code)).then_some(i))
            .collect();
        if pixels.len() < *wanted {
            return Err(Error::StratumDeficit {
                stratum: stratum.label().to_string(),
                wanted: *wanted,
                available: pixels.len(),
            });
        }
        let mut rng = substream(seed, &format!("stratum-{code}"));
        for i in 0..*wanted {
            let j = rng.random_range(i..pixels.len());
            pixels.swap(i, j);
        }
        let mut chosen = pixels[..*wanted].to_vec();
        chosen.sort_unstable();
        for index in chosen {
            let (row, col) = (index / header.ncols, index % header.ncols);
            records.push(SampleRecord {
                id: next_id,
                location: header.cell_center(row, col),
                stratum,
                ref_2020: None,
                ref_2021: None,
                annotator_labels: Vec::new(),
                consensus_status: ConsensusStatus::Unlabeled,
            });
            next_id += 1;
        }
    }
    Ok(records)
}

fn consensus_for_year(
    votes: &[CropLabel],
    adjudicated: Option<CropLabel>,
) -> (Option<CropLabel>, ConsensusStatus) {
    let crop = votes.iter().filter(|l| **l == CropLabel::Crop).count();
    let noncrop = votes.len() - crop;
    if crop == votes.len() || noncrop == votes.len() {
        return (Some(votes[0]), ConsensusStatus::Unanimous);
    }
    match crop.cmp(&noncrop) {
        std::cmp::Ordering::Greater => (Some(CropLabel::Crop), ConsensusStatus::Majority),
        std::cmp::Ordering::Less => (Some(CropLabel::NonCrop), ConsensusStatus::Majority),
        std::cmp::Ordering::Equal => match adjudicated {
            Some(label) => (Some(label), ConsensusStatus::Adjudicated),
            None => (None, ConsensusStatus::Unresolved),
        },
    }
}

/// Merge raw annotator labels (and optional adjudications of ties) into the
/// base samples' reference labels. The record's consensus status is the
/// weakest of its two per-year outcomes.
pub fn merge_labels(
    base: &[SampleRecord],
    annotations: &[AnnotationRecord],
    adjudications: &[AdjudicationRecord],
) -> Result<Vec<SampleRecord>> {
    let known: BTreeSet<u64> = base.iter().map(|s| s.id).collect();
    for a in annotations {
        if !known.contains(&a.sample_id) {
            return Err(Error::UnknownSample(a.sample_id));
        }
    }
    for a in adjudications {
        if !known.contains(&a.sample_id) {
            return Err(Error::UnknownSample(a.sample_id));
        }
    }

    let mut votes: BTreeMap<(u64, u16), Vec<CropLabel>> = BTreeMap::new();
    for a in annotations {
        votes.entry((a.sample_id, a.year)).or_default().push(a.label);
    }
    let mut final_calls: BTreeMap<(u64, u16), CropLabel> = BTreeMap::new();
    for a in adjudications {
        final_calls.insert((a.sample_id, a.year), a.label);
    }

    let mut merged = Vec::with_capacity(base.len());
    for sample in base {
        let mut labels = [None, None];
        let mut statuses = [ConsensusStatus::Unanimous; 2];
        for (slot, year) in [(0usize, 2020u16), (1, 2021)] {
            let year_votes = votes.get(&(sample.id, year)).ok_or_else(|| {
                Error::Invalid(format!("sample {} has no annotations for {year}", sample.id))
            })?;
            let (label, status) = consensus_for_year(year_votes, final_calls.get(&(sample.id, year)).copied());
            labels[slot] = label;
            statuses[slot] = status;
        }
        let rank = |s: ConsensusStatus| match s {
            ConsensusStatus::Unanimous => 0,
            ConsensusStatus::Majority => 1,
            ConsensusStatus::Adjudicated => 2,
            ConsensusStatus::Unresolved => 3,
            ConsensusStatus::Unlabeled => 4,
        };
        let status = if rank(statuses[0]) >= rank(statuses[1]) { statuses[0] } else { statuses[1] };
        merged.push(SampleRecord {
            id: sample.id,
            location: sample.location,
            stratum: sample.stratum,
            ref_2020: labels[0],
            ref_2021: labels[1],
            annotator_labels: annotations
                .iter()
                .filter(|a| a.sample_id == sample.id)
                .cloned()
                .collect(),
            consensus_status: status,
        });
    }
    Ok(merged)
}
