//! Record parsing and construction of weighted innovation maps.
//!
//! The record file is UTF-8 line-delimited: one JSON object per line with
//! keys `id`, `geo` (array of dotted paths), `tech` (array of dotted
//! paths), and an optional ISO-8601 `date`. Each record carries total
//! weight exactly 1, split uniformly over the Cartesian product of its
//! location and technology codes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use ndarray::Array2;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{
    validate_hierarchy, CodePath, Dimension, PatentRecord, ScalePair, WeightedMap,
};

/// What to do with records that fail hierarchy validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InvalidRecordPolicy {
    /// Abort the run on the first validation report with violations.
    #[default]
    Reject,
    /// Drop offending records but count them in the run manifest.
    Skip,
}

/// Ingestion configuration.
#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    pub finest_geo_level: usize,
    pub finest_tech_level: usize,
    /// Inclusive `[start, end]` window of ISO dates. Records without a
    /// date are filtered out when a window is set.
    pub date_window: Option<(String, String)>,
    pub policy: InvalidRecordPolicy,
    /// Optional exact-match rewrite of raw code strings (native IPC
    /// spellings to dotted paths) applied before parsing.
    pub rewrite: Option<BTreeMap<String, String>>,
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.finest_geo_level < 1 || self.finest_tech_level < 1 {
            return Err(Error::Range("finest levels must be >= 1".into()));
        }
        if let Some((start, end)) = &self.date_window {
            check_iso_date(start)?;
            check_iso_date(end)?;
            if start > end {
                return Err(Error::Range(format!(
                    "date window start {start} is after end {end}"
                )));
            }
        }
        Ok(())
    }
}

fn check_iso_date(text: &str) -> Result<()> {
    let bytes = text.as_bytes();
    let shaped = bytes.len() == 10
        && bytes[4] == b'-'
        && bytes[7] == b'-'
        && bytes.iter().enumerate().all(|(i, &b)| {
            if i == 4 || i == 7 {
                true
            } else {
                b.is_ascii_digit()
            }
        });
    if !shaped {
        return Err(Error::Range(format!("date {text:?} is not YYYY-MM-DD")));
    }
    let month: u32 = text[5..7].parse().unwrap();
    let day: u32 = text[8..10].parse().unwrap();
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(Error::Range(format!("date {text:?} has month/day out of range")));
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    geo: Vec<String>,
    tech: Vec<String>,
    #[serde(default)]
    date: Option<String>,
}

/// Counters for the run manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub parsed: usize,
    pub filtered: usize,
    pub skipped: usize,
}

impl IngestStats {
    pub fn used(&self) -> usize {
        self.parsed - self.filtered - self.skipped
    }
}

/// Parse a record stream in file order. Duplicate ids and malformed
/// lines are errors naming the line; the date filter is applied here,
/// before any map is built.
pub fn parse_patents<R: BufRead>(
    reader: R,
    cfg: &IngestConfig,
) -> Result<(Vec<PatentRecord>, IngestStats)> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut stats = IngestStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen_ids.insert(raw.id.clone()) {
            return Err(Error::DuplicateId { id: raw.id, line: line_no });
        }
        stats.parsed += 1;
        if let Some(date) = &raw.date {
            check_iso_date(date).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        if let Some((start, end)) = &cfg.date_window {
            let keep = raw
                .date
                .as_deref()
                .is_some_and(|d| d >= start.as_str() && d <= end.as_str());
            if !keep {
                stats.filtered += 1;
                continue;
            }
        }
        let rewrite = |code: &str| -> String {
            match &cfg.rewrite {
                Some(table) => table.get(code).cloned().unwrap_or_else(|| code.to_owned()),
                None => code.to_owned(),
            }
        };
        let parse_codes = |codes: &[String], dim: Dimension| -> Result<Vec<CodePath>> {
            codes
                .iter()
                .map(|c| {
                    CodePath::parse(&rewrite(c), dim).map_err(|e| Error::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })
                })
                .collect()
        };
        records.push(PatentRecord::new(
            raw.id,
            parse_codes(&raw.geo, Dimension::Geo)?,
            parse_codes(&raw.tech, Dimension::Tech)?,
            raw.date,
        ));
    }
    Ok((records, stats))
}

/// Validate records against the configured finest levels and apply the
/// invalid-record policy. Returns the surviving records with updated
/// skip counts.
pub fn apply_policy(
    records: Vec<PatentRecord>,
    cfg: &IngestConfig,
    stats: &mut IngestStats,
) -> Result<Vec<PatentRecord>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records left to analyze".into()));
    }
    let report = validate_hierarchy(&records, cfg.finest_geo_level, cfg.finest_tech_level)?;
    if report.is_clean() {
        return Ok(records);
    }
    match cfg.policy {
        InvalidRecordPolicy::Reject => Err(Error::InvalidRecords {
            count: report.violations.len(),
            first: format!(
                "record {}: {}",
                report.violations[0].record_id, report.violations[0].reason
            ),
        }),
        InvalidRecordPolicy::Skip => {
            let bad: BTreeSet<&str> =
                report.violations.iter().map(|v| v.record_id.as_str()).collect();
            let kept: Vec<PatentRecord> = records
                .into_iter()
                .filter(|r| !bad.contains(r.id.as_str()))
                .collect();
            stats.skipped += bad.len();
            if kept.is_empty() {
                return Err(Error::EmptyInput("every record failed validation".into()));
            }
            Ok(kept)
        }
    }
}

/// Build the finest-scale weighted map. Every record contributes
/// `1 / (|geo| * |tech|)` to each pair in the Cartesian product of its
/// codes truncated to the finest levels, so the map total equals the
/// record count.
pub fn build_finest_map(records: &[PatentRecord], cfg: &IngestConfig) -> Result<WeightedMap> {
    if records.is_empty() {
        return Err(Error::EmptyInput("cannot build a map from zero records".into()));
    }
    let scale = ScalePair::new(cfg.finest_geo_level, cfg.finest_tech_level);
    let mut row_set: BTreeSet<CodePath> = BTreeSet::new();
    let mut col_set: BTreeSet<CodePath> = BTreeSet::new();
    for record in records {
        for code in &record.geo_codes {
            row_set.insert(code.truncate(cfg.finest_geo_level)?);
        }
        for code in &record.tech_codes {
            col_set.insert(code.truncate(cfg.finest_tech_level)?);
        }
    }
    let row_labels: Vec<CodePath> = row_set.into_iter().collect();
    let col_labels: Vec<CodePath> = col_set.into_iter().collect();
    let row_index: BTreeMap<&CodePath, usize> =
        row_labels.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let col_index: BTreeMap<&CodePath, usize> =
        col_labels.iter().enumerate().map(|(i, c)| (c, i)).collect();

    let mut weights = Array2::<f64>::zeros((row_labels.len(), col_labels.len()));
    for record in records {
        let share = 1.0 / (record.geo_codes.len() * record.tech_codes.len()) as f64;
        for geo in &record.geo_codes {
            let i = row_index[&geo.truncate(cfg.finest_geo_level)?];
            for tech in &record.tech_codes {
                let j = col_index[&tech.truncate(cfg.finest_tech_level)?];
                weights[[i, j]] += share;
            }
        }
    }
    Ok(WeightedMap { scale, row_labels, col_labels, weights })
}

/// Aggregate a map to a coarser scale pair by summing weights over rows
/// and columns sharing the same truncated labels. Total weight is
/// preserved; the target must not be finer than the source.
pub fn aggregate_map(map: &WeightedMap, target: ScalePair) -> Result<WeightedMap> {
    if target.geo_level > map.scale.geo_level || target.tech_level > map.scale.tech_level {
        return Err(Error::Range(format!(
            "target scale {target} is finer than source {}",
            map.scale
        )));
    }
    let group = |labels: &[CodePath], level: usize| -> Result<(Vec<CodePath>, Vec<usize>)> {
        let mut out_labels: Vec<CodePath> = Vec::new();
        let mut assign = Vec::with_capacity(labels.len());
        for label in labels {
            let parent = label.truncate(level)?;
            match out_labels.last() {
                Some(last) if *last == parent => {}
                _ => out_labels.push(parent.clone()),
            }
            assign.push(out_labels.len() - 1);
        }
        Ok((out_labels, assign))
    };
    let (row_labels, row_assign) = group(&map.row_labels, target.geo_level)?;
    let (col_labels, col_assign) = group(&map.col_labels, target.tech_level)?;
    let mut weights = Array2::<f64>::zeros((row_labels.len(), col_labels.len()));
    for i in 0..map.nrows() {
        for j in 0..map.ncols() {
            weights[[row_assign[i], col_assign[j]]] += map.weights[[i, j]];
        }
    }
    Ok(WeightedMap { scale: target, row_labels, col_labels, weights })
}
