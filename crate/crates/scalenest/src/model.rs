//! Domain types shared by the whole pipeline: hierarchical codes, scale
//! pairs, patent-like records, and the weighted/binary incidence maps.
//!
//! Both the geographical and the technological dimension are encoded as
//! dot-delimited path codes ("US.CA.SF", "A.A01.A01B"). Identity at level
//! `k` is prefix truncation, so a single code addresses every aggregation
//! level at once. Levels are 1-based with 1 = coarsest.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Which hierarchy a code belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Geo,
    Tech,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dimension::Geo => write!(f, "geo"),
            Dimension::Tech => write!(f, "tech"),
        }
    }
}

/// A hierarchical code, addressable at any level by truncation.
///
/// Ordering is segment-wise lexicographic, which keeps all children of a
/// common parent contiguous in any sorted label list. That contiguity is
/// what makes the row blocks of a [`BinaryMap`] well defined.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodePath {
    segments: Vec<String>,
    dimension: Dimension,
}

impl CodePath {
    /// Parse a dot-delimited code such as `"US.CA"`.
    pub fn parse(text: &str, dimension: Dimension) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::EmptyInput(format!("empty {dimension} code")));
        }
        let segments: Vec<String> = text.split('.').map(str::to_owned).collect();
        if segments.iter().any(String::is_empty) {
            return Err(Error::Parse {
                line: 0,
                message: format!("code {text:?} contains an empty segment"),
            });
        }
        Ok(CodePath { segments, dimension })
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    /// Number of levels this code reaches.
    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    /// First `level` segments as a new code. Identity when `level == depth`.
    pub fn truncate(&self, level: usize) -> Result<CodePath> {
        if level < 1 || level > self.depth() {
            return Err(Error::Range(format!(
                "cannot truncate {self} (depth {}) to level {level}",
                self.depth()
            )));
        }
        Ok(CodePath {
            segments: self.segments[..level].to_vec(),
            dimension: self.dimension,
        })
    }
}

impl fmt::Display for CodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.segments.join("."))
    }
}

/// One (geographical level, technological level) combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScalePair {
    pub geo_level: usize,
    pub tech_level: usize,
}

impl ScalePair {
    pub fn new(geo_level: usize, tech_level: usize) -> Self {
        ScalePair { geo_level, tech_level }
    }
}

impl fmt::Display for ScalePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(geo {}, tech {})", self.geo_level, self.tech_level)
    }
}

/// One patent-like record: an id, the finest-level codes it touches, and
/// an optional ISO-8601 date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatentRecord {
    pub id: String,
    pub geo_codes: Vec<CodePath>,
    pub tech_codes: Vec<CodePath>,
    pub date: Option<String>,
}

impl PatentRecord {
    /// Build a record, deduplicating and sorting both code sets.
    pub fn new(
        id: String,
        geo_codes: Vec<CodePath>,
        tech_codes: Vec<CodePath>,
        date: Option<String>,
    ) -> Self {
        let dedup = |codes: Vec<CodePath>| -> Vec<CodePath> {
            let set: BTreeSet<CodePath> = codes.into_iter().collect();
            set.into_iter().collect()
        };
        PatentRecord {
            id,
            geo_codes: dedup(geo_codes),
            tech_codes: dedup(tech_codes),
            date,
        }
    }
}

/// A single violation found by [`validate_hierarchy`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record_id: String,
    pub reason: String,
}

/// Outcome of validating a record list against the configured finest levels.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub checked: usize,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that every record has non-empty code sets and that each code
/// reaches the configured finest level for its dimension.
pub fn validate_hierarchy(
    records: &[PatentRecord],
    finest_geo: usize,
    finest_tech: usize,
) -> Result<ValidationReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to validate".into()));
    }
    let mut report = ValidationReport { violations: Vec::new(), checked: records.len() };
    for record in records {
        let mut blame = |reason: String| {
            report.violations.push(Violation { record_id: record.id.clone(), reason });
        };
        if record.geo_codes.is_empty() {
            blame("empty geo code set".into());
        }
        if record.tech_codes.is_empty() {
            blame("empty tech code set".into());
        }
        for code in &record.geo_codes {
            if code.depth() < finest_geo {
                blame(format!(
                    "geo code {code} has depth {} but finest level is {finest_geo}",
                    code.depth()
                ));
            }
        }
        for code in &record.tech_codes {
            if code.depth() < finest_tech {
                blame(format!(
                    "tech code {code} has depth {} but finest level is {finest_tech}",
                    code.depth()
                ));
            }
        }
    }
    Ok(report)
}

/// Location x technology weight matrix at one scale pair, prior to
/// binarization. Row and column labels are sorted and duplicate-free;
/// every record ingested contributes total weight 1.
#[derive(Debug, Clone)]
pub struct WeightedMap {
    pub scale: ScalePair,
    pub row_labels: Vec<CodePath>,
    pub col_labels: Vec<CodePath>,
    pub weights: Array2<f64>,
}

impl WeightedMap {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn nrows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn ncols(&self) -> usize {
        self.col_labels.len()
    }
}

/// Contiguous row ranges grouping the children of each parent one
/// geographic level up. A single block covers everything at level 1.
pub type RowBlocks = Vec<Range<usize>>;

/// Group sorted labels by their prefix at `parent_level`. With
/// `parent_level == 0` the result is one block spanning all rows.
pub fn blocks_from_labels(labels: &[CodePath], parent_level: usize) -> Result<RowBlocks> {
    if labels.is_empty() {
        return Ok(Vec::new());
    }
    if parent_level == 0 {
        return Ok(vec![0..labels.len()]);
    }
    let mut blocks = Vec::new();
    let mut start = 0usize;
    let mut current = labels[0].truncate(parent_level)?;
    for (idx, label) in labels.iter().enumerate().skip(1) {
        let parent = label.truncate(parent_level)?;
        if parent != current {
            blocks.push(start..idx);
            start = idx;
            current = parent;
        }
    }
    blocks.push(start..labels.len());
    Ok(blocks)
}

/// 0/1 incidence matrix at one scale pair.
///
/// `blocks` partitions the rows into the children of each parent at
/// `geo_level - 1`; packing drops it because reordering destroys the
/// contiguity (callers that still need the partition keep the unpacked
/// map around).
#[derive(Debug, Clone)]
pub struct BinaryMap {
    pub scale: ScalePair,
    pub row_labels: Vec<CodePath>,
    pub col_labels: Vec<CodePath>,
    pub bits: Array2<u8>,
    pub blocks: Option<RowBlocks>,
}

impl BinaryMap {
    /// Build a map and derive its row blocks from the labels.
    pub fn new(
        scale: ScalePair,
        row_labels: Vec<CodePath>,
        col_labels: Vec<CodePath>,
        bits: Array2<u8>,
    ) -> Result<Self> {
        let blocks = blocks_from_labels(&row_labels, scale.geo_level.saturating_sub(1))?;
        Ok(BinaryMap { scale, row_labels, col_labels, bits, blocks: Some(blocks) })
    }

    pub fn nrows(&self) -> usize {
        self.bits.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.bits.ncols()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Fraction of cells set.
    pub fn fill(&self) -> f64 {
        let cells = self.nrows() * self.ncols();
        if cells == 0 {
            return 0.0;
        }
        self.ones() as f64 / cells as f64
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        self.bits
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&b| b as usize).sum())
            .collect()
    }

    pub fn col_degrees(&self) -> Vec<usize> {
        self.bits
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|&b| b as usize).sum())
            .collect()
    }

    /// Swap the two dimensions, recomputing blocks from the technology
    /// hierarchy. Used by the transposed variant of the null model.
    pub fn transposed(&self) -> Result<BinaryMap> {
        let scale = ScalePair::new(self.scale.tech_level, self.scale.geo_level);
        let blocks =
            blocks_from_labels(&self.col_labels, self.scale.tech_level.saturating_sub(1))?;
        Ok(BinaryMap {
            scale,
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            bits: self.bits.t().to_owned(),
            blocks: Some(blocks),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geo(text: &str) -> CodePath {
        CodePath::parse(text, Dimension::Geo).unwrap()
    }

    fn tech(text: &str) -> CodePath {
        CodePath::parse(text, Dimension::Tech).unwrap()
    }

    #[test]
    fn truncate_prefix() {
        let code = geo("US.CA.SF");
        assert_eq!(code.truncate(2).unwrap().to_string(), "US.CA");
    }

    #[test]
    fn truncate_identity() {
        let code = geo("US");
        assert_eq!(code.truncate(1).unwrap(), code);
    }

    #[test]
    fn truncate_beyond_depth_is_range_error() {
        let code = tech("A01B");
        let err = code.truncate(5).unwrap_err();
        assert!(matches!(err, Error::Range(_)), "got {err:?}");
        assert!(err.to_string().contains("A01B"));
        assert!(err.to_string().contains('5'));
    }

    #[test]
    fn parse_rejects_empty_segments() {
        assert!(CodePath::parse("US..CA", Dimension::Geo).is_err());
        assert!(CodePath::parse("", Dimension::Geo).is_err());
    }

    #[test]
    fn validate_clean_records() {
        let records: Vec<PatentRecord> = (0..3)
            .map(|i| {
                PatentRecord::new(
                    format!("p{i}"),
                    vec![geo("US.CA")],
                    vec![tech("A.A01.A01B.33")],
                    None,
                )
            })
            .collect();
        let report = validate_hierarchy(&records, 2, 4).unwrap();
        assert!(report.is_clean());
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn validate_flags_shallow_geo() {
        let record =
            PatentRecord::new("p9".into(), vec![geo("US")], vec![tech("A.A01")], None);
        let report = validate_hierarchy(std::slice::from_ref(&record), 2, 2).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].record_id, "p9");
    }

    #[test]
    fn validate_flags_empty_dimension() {
        let record = PatentRecord::new("p0".into(), vec![geo("US.CA")], vec![], None);
        let report = validate_hierarchy(std::slice::from_ref(&record), 2, 2).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].reason.contains("empty tech"));
    }

    #[test]
    fn validate_empty_list_is_error() {
        assert!(matches!(validate_hierarchy(&[], 1, 1), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn record_codes_are_deduplicated_and_sorted() {
        let record = PatentRecord::new(
            "p1".into(),
            vec![geo("US.NY"), geo("US.CA"), geo("US.NY")],
            vec![tech("B.B01")],
            None,
        );
        assert_eq!(record.geo_codes.len(), 2);
        assert_eq!(record.geo_codes[0].to_string(), "US.CA");
    }

    #[test]
    fn blocks_single_when_parent_level_zero() {
        let labels = vec![geo("A"), geo("B"), geo("C")];
        assert_eq!(blocks_from_labels(&labels, 0).unwrap(), vec![0..3]);
    }

    #[test]
    fn blocks_group_children_by_parent() {
        let labels = vec![geo("A.a"), geo("A.b"), geo("B.a"), geo("B.b"), geo("B.c")];
        assert_eq!(blocks_from_labels(&labels, 1).unwrap(), vec![0..2, 2..5]);
    }

    proptest! {
        // truncate(truncate(c, k), j) == truncate(c, j) for j <= k <= depth
        #[test]
        fn truncation_composes(segs in proptest::collection::vec("[a-z]{1,3}", 1..6),
                               j in 1usize..6, k in 1usize..6) {
            let depth = segs.len();
            let (j, k) = (j.min(k), j.max(k));
            prop_assume!(k <= depth);
            let code = CodePath::parse(&segs.join("."), Dimension::Geo).unwrap();
            let via_k = code.truncate(k).unwrap().truncate(j).unwrap();
            prop_assert_eq!(via_k, code.truncate(j).unwrap());
        }

        // blocks partition the row index sequence exactly
        #[test]
        fn blocks_partition_rows(parents in 1usize..5, children in 1usize..5) {
            let labels: Vec<CodePath> = (0..parents)
                .flat_map(|p| (0..children).map(move |c| format!("p{p:02}.c{c:02}")))
                .map(|s| CodePath::parse(&s, Dimension::Geo).unwrap())
                .collect();
            let blocks = blocks_from_labels(&labels, 1).unwrap();
            let mut covered = Vec::new();
            for b in &blocks {
                prop_assert!(!b.is_empty());
                covered.extend(b.clone());
            }
            prop_assert_eq!(covered, (0..labels.len()).collect::<Vec<_>>());
        }
    }
}
