//! Multiscale nestedness analysis for hierarchical bipartite records.
//!
//! The pipeline ingests patent-like records carrying hierarchical
//! geographical and technological codes, builds location x technology
//! incidence maps at every combination of aggregation levels, binarizes
//! them by revealed comparative advantage, packs them with the
//! fitness-complexity ranking, measures their nestedness temperature,
//! and scores each scale combination against a block-constrained
//! column-shuffle null model. The headline output is a grid of z-scores
//! over all scale pairs together with the frontier separating
//! significantly nested from significantly anti-nested combinations.

pub mod binarize;
pub mod error;
pub mod grid;
pub mod ingest;
pub mod model;
pub mod rank;
pub mod recap;
pub mod synth;
pub mod temperature;

pub use error::{Error, Result};
pub use model::{BinaryMap, CodePath, Dimension, PatentRecord, ScalePair, WeightedMap};
