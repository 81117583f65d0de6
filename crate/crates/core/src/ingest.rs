//! CSV parsers: ACLED-style conflict events with event-type filtering, and
//! loaders/writers for sample, annotator, adjudication, and labeled-point
//! files.
//!
//! Malformed event rows are skipped with a line-numbered diagnostic rather
//! than aborting the load; skip counts are surfaced so partial loads are
//! never silent.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;

use crate::crops::{ChangeClass, CropLabel};
use crate::error::{Error, Result};
use crate::geo::{GeoPoint, NamedRegion};
use crate::sampling::{AdjudicationRecord, AnnotationRecord, ConsensusStatus, SampleRecord};

/// One georeferenced conflict event.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictEvent {
    pub date: NaiveDate,
    pub event_type: String,
    pub location: GeoPoint,
    pub admin_zone: Option<String>,
}

/// Outcome of an event load: parsed events, per-type tally of the kept
/// events, and the rows that were skipped with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct EventLoadReport {
    pub events: Vec<ConflictEvent>,
    pub tally: BTreeMap<String, usize>,
    pub skipped: Vec<(u64, String)>,
}

fn find_column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

/// Load an ACLED-style CSV (required columns `event_date`, `event_type`,
/// `latitude`, `longitude`, case-insensitive). Events whose type is in
/// `exclude_types` (case-insensitive) are dropped; `date_range` keeps only
/// events within the inclusive interval.
pub fn load_events(
    path: &Path,
    exclude_types: &BTreeSet<String>,
    date_range: Option<(NaiveDate, NaiveDate)>,
) -> Result<EventLoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?
        .clone();
    let date_col = find_column(&headers, &["event_date"])
        .ok_or_else(|| Error::Invalid(format!("{}: missing column event_date", path.display())))?;
    let type_col = find_column(&headers, &["event_type"])
        .ok_or_else(|| Error::Invalid(format!("{}: missing column event_type", path.display())))?;
    let lat_col = find_column(&headers, &["latitude"])
        .ok_or_else(|| Error::Invalid(format!("{}: missing column latitude", path.display())))?;
    let lon_col = find_column(&headers, &["longitude"])
        .ok_or_else(|| Error::Invalid(format!("{}: missing column longitude", path.display())))?;
    let zone_col = find_column(&headers, &["admin_zone", "admin2"]);

    let excluded: BTreeSet<String> = exclude_types.iter().map(|t| t.trim().to_lowercase()).collect();
    let mut report = EventLoadReport::default();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, csv::Position::line);
                report.skipped.push((line, e.to_string()));
                continue;
            }
        };
        let line = record.position().map_or(0, csv::Position::line);
        let parse = |col: usize, what: &str| -> std::result::Result<&str, String> {
            record.get(col).ok_or_else(|| format!("missing {what} field"))
        };
        let parsed = (|| -> std::result::Result<ConflictEvent, String> {
            let date = NaiveDate::parse_from_str(parse(date_col, "event_date")?.trim(), "%Y-%m-%d")
                .map_err(|e| format!("bad event_date: {e}"))?;
            let event_type = parse(type_col, "event_type")?.trim().to_string();
            let lat: f64 = parse(lat_col, "latitude")?
                .trim()
                .parse()
                .map_err(|_| "bad latitude".to_string())?;
            let lon: f64 = parse(lon_col, "longitude")?
                .trim()
                .parse()
                .map_err(|_| "bad longitude".to_string())?;
            let location = GeoPoint::new(lon, lat).map_err(|e| e.to_string())?;
            let admin_zone = zone_col
                .and_then(|c| record.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from);
            Ok(ConflictEvent {
                date,
                event_type,
                location,
                admin_zone,
            })
        })();
        match parsed {
            Ok(event) => {
                if excluded.contains(&event.event_type.to_lowercase()) {
                    continue;
                }
                if let Some((start, end)) = date_range {
                    if event.date < start || event.date > end {
                        continue;
                    }
                }
                *report.tally.entry(event.event_type.clone()).or_insert(0) += 1;
                report.events.push(event);
            }
            Err(msg) => report.skipped.push((line, msg)),
        }
    }
    Ok(report)
}

/// Count events per named zone by polygon membership; events falling in no
/// zone are tallied under `"unassigned"`. Zones are checked in order, first
/// containing zone wins.
pub fn events_per_zone(events: &[ConflictEvent], zones: &[NamedRegion]) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for event in events {
        let zone = zones
            .iter()
            .find(|z| z.region.contains(&event.location))
            .map_or("unassigned", |z| z.name.as_str());
        *counts.entry(zone.to_string()).or_insert(0) += 1;
    }
    counts
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("{}: {e}", path.display()))
}

/// Read a sample CSV (`id,lon,lat,stratum,ref_2020,ref_2021,consensus_status`).
pub fn load_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.deserialize::<SampleRow>() {
        let row = record.map_err(|e| csv_err(path, e))?;
        let id = row.id;
        if !seen.insert(id) {
            return Err(Error::Invalid(format!("{}: duplicate sample id {id}", path.display())));
        }
        out.push(row.into_record()?);
    }
    Ok(out)
}

/// Write samples in the canonical column order.
pub fn write_samples(path: &Path, samples: &[SampleRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    writer
        .write_record(["id", "lon", "lat", "stratum", "ref_2020", "ref_2021", "consensus_status"])
        .map_err(|e| csv_err(path, e))?;
    for s in samples {
        writer
            .write_record([
                s.id.to_string(),
                format!("{}", s.location.lon),
                format!("{}", s.location.lat),
                s.stratum.code().to_string(),
                s.ref_2020.map_or(String::new(), |l| l.as_str().to_string()),
                s.ref_2021.map_or(String::new(), |l| l.as_str().to_string()),
                s.consensus_status.as_str().to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(serde::Deserialize)]
struct SampleRow {
    id: u64,
    lon: f64,
    lat: f64,
    stratum: String,
    #[serde(default)]
    ref_2020: String,
    #[serde(default)]
    ref_2021: String,
    #[serde(default)]
    consensus_status: String,
}

impl SampleRow {
    fn into_record(self) -> Result<SampleRecord> {
        let parse_opt = |s: &str| -> Result<Option<CropLabel>> {
            let t = s.trim();
            if t.is_empty() {
                Ok(None)
            } else {
                CropLabel::parse(t).map(Some)
            }
        };
        Ok(SampleRecord {
            id: self.id,
            location: GeoPoint::new(self.lon, self.lat)?,
            stratum: ChangeClass::parse(&self.stratum)?,
            ref_2020: parse_opt(&self.ref_2020)?,
            ref_2021: parse_opt(&self.ref_2021)?,
            annotator_labels: Vec::new(),
            consensus_status: ConsensusStatus::parse(&self.consensus_status)?,
        })
    }
}

/// Read an annotator CSV (`sample_id,annotator,year,label`).
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    #[derive(serde::Deserialize)]
    struct Row {
        sample_id: u64,
        annotator: String,
        year: u16,
        label: String,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for record in reader.deserialize::<Row>() {
        let row = record.map_err(|e| csv_err(path, e))?;
        out.push(AnnotationRecord {
            sample_id: row.sample_id,
            annotator: row.annotator,
            year: row.year,
            label: CropLabel::parse(&row.label)?,
        });
    }
    Ok(out)
}

/// Read an adjudication CSV (`sample_id,year,label`).
pub fn load_adjudications(path: &Path) -> Result<Vec<AdjudicationRecord>> {
    #[derive(serde::Deserialize)]
    struct Row {
        sample_id: u64,
        year: u16,
        label: String,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for record in reader.deserialize::<Row>() {
        let row = record.map_err(|e| csv_err(path, e))?;
        out.push(AdjudicationRecord {
            sample_id: row.sample_id,
            year: row.year,
            label: CropLabel::parse(&row.label)?,
        });
    }
    Ok(out)
}

/// Read a labeled-point CSV (`lon,lat,label`) used by the threshold sweep
/// and the external-map comparison.
pub fn load_label_points(path: &Path) -> Result<Vec<(GeoPoint, CropLabel)>> {
    #[derive(serde::Deserialize)]
    struct Row {
        lon: f64,
        lat: f64,
        label: String,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for record in reader.deserialize::<Row>() {
        let row = record.map_err(|e| csv_err(path, e))?;
        out.push((GeoPoint::new(row.lon, row.lat)?, CropLabel::parse(&row.label)?));
    }
    Ok(out)
}
