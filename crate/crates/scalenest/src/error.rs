//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// A level or target outside the range supported by the data.
    #[error("range error: {0}")]
    Range(String),

    /// Empty input where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A malformed line in a record file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Two records sharing the same id.
    #[error("duplicate record id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    /// Records failed hierarchy validation under the Reject policy.
    #[error("{count} record(s) failed validation; first: {first}")]
    InvalidRecords { count: usize, first: String },

    /// An all-zero weight matrix cannot be binarized.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Pruning left fewer than two rows or columns.
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    /// Fill outside the range where the isocline is defined.
    #[error("degenerate fill {fill}: must lie within [1e-4, 1 - 1e-4]")]
    DegenerateFill { fill: f64 },

    /// An operation was called on input violating its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Dimension mismatch between paired structures.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The null model cannot produce enough usable samples.
    #[error("pathological input: {0}")]
    Pathological(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
