//! Full analysis over all scale pairs and frontier extraction.
//!
//! Every (geo level, tech level) combination is scored independently:
//! aggregate the finest weighted map, binarize by RCA, prune, rank,
//! pack, measure the empirical temperature, then compare it against a
//! ReCap null ensemble whose row blocks come from the geographic level
//! one step coarser (a single all-rows block at level 1). Per-cell seeds
//! derive from the run seed and the cell coordinates, so any subset of
//! cells reproduces the full run's numbers.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::binarize::{prune_empty, rca_matrix, threshold_binarize, RcaConfig};
use crate::error::{Error, Result};
use crate::ingest::{aggregate_map, build_finest_map, IngestConfig};
use crate::model::{PatentRecord, ScalePair, WeightedMap};
use crate::rank::{fitness_complexity, pack_matrix, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::recap::{mix_key, null_ensemble, z_score, NullEnsemble, ZScore};
use crate::temperature::measure_temperature;

/// Per-run analysis parameters.
#[derive(Debug, Clone)]
pub struct GridConfig {
    pub rca: RcaConfig,
    /// Null ensemble size per cell.
    pub samples: usize,
    pub seed: u64,
    /// |z| at or above this is significant (in sigma).
    pub significance_threshold: f64,
    /// Shuffle within technology-parent column blocks instead of
    /// geographic row blocks.
    pub transpose_recap: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            rca: RcaConfig::default(),
            samples: 1000,
            seed: 0,
            significance_threshold: 2.0,
            transpose_recap: false,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Range(format!(
                "ensemble size must be >= 2, got {}",
                self.samples
            )));
        }
        if !(self.significance_threshold > 0.0) {
            return Err(Error::Range(format!(
                "significance threshold must be > 0, got {}",
                self.significance_threshold
            )));
        }
        Ok(())
    }
}

/// Outcome at one scale pair.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub scale: ScalePair,
    /// Dimensions of the pruned empirical matrix.
    pub rows: usize,
    pub cols: usize,
    pub fill: f64,
    pub t_emp: f64,
    pub null_mean: f64,
    pub null_std: f64,
    pub score: ZScore,
    pub n_samples: usize,
    /// Fill or spread left nothing to test at this cell.
    pub degenerate: bool,
    pub note: String,
    /// Raw null temperatures, kept for export; absent when degenerate
    /// or when the cell was reloaded from CSV.
    pub ensemble: Option<NullEnsemble>,
}

impl GridCell {
    fn degenerate_at(scale: ScalePair, rows: usize, cols: usize, note: String) -> Self {
        GridCell {
            scale,
            rows,
            cols,
            fill: f64::NAN,
            t_emp: f64::NAN,
            null_mean: f64::NAN,
            null_std: f64::NAN,
            score: ZScore { t_empirical: f64::NAN, z: None, empirical_p: 1.0 },
            n_samples: 0,
            degenerate: true,
            note,
            ensemble: None,
        }
    }
}

/// The z-score matrix over all scale combinations.
#[derive(Debug, Clone)]
pub struct ScaleGrid {
    pub cells: BTreeMap<ScalePair, GridCell>,
    pub geo_depth: usize,
    pub tech_depth: usize,
    pub significance_threshold: f64,
}

/// Significantly nested / anti-nested / neither, by sign and |z|.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frontier {
    pub nested_cells: Vec<ScalePair>,
    pub antinested_cells: Vec<ScalePair>,
    pub insignificant_cells: Vec<ScalePair>,
    pub degenerate_cells: Vec<ScalePair>,
}

/// Score a single scale pair from the finest weighted map. Degenerate
/// pipelines (all-zero map, pruning collapse, out-of-range fill, or a
/// spreadless ensemble) flag the cell instead of failing the run.
pub fn compute_cell(
    finest: &WeightedMap,
    scale: ScalePair,
    cfg: &GridConfig,
) -> Result<GridCell> {
    let map = aggregate_map(finest, scale)?;
    let rca = match rca_matrix(&map) {
        Ok(rca) => rca,
        Err(Error::DegenerateInput(note)) => {
            return Ok(GridCell::degenerate_at(scale, map.nrows(), map.ncols(), note))
        }
        Err(e) => return Err(e),
    };
    let binary = threshold_binarize(&rca, &map, &cfg.rca)?;
    let binary = if cfg.transpose_recap { binary.transposed()? } else { binary };
    let pruned = match prune_empty(&binary) {
        Ok((pruned, _)) => pruned,
        Err(Error::DegenerateMatrix(note)) => {
            return Ok(GridCell::degenerate_at(scale, binary.nrows(), binary.ncols(), note))
        }
        Err(e) => return Err(e),
    };
    let ranks = fitness_complexity(&pruned, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let (packed, _, _) = pack_matrix(&pruned, &ranks)?;
    let report = match measure_temperature(&packed) {
        Ok(report) => report,
        Err(Error::DegenerateFill { fill }) => {
            return Ok(GridCell::degenerate_at(
                scale,
                pruned.nrows(),
                pruned.ncols(),
                format!("degenerate fill {fill}"),
            ))
        }
        Err(e) => return Err(e),
    };
    let cell_seed = mix_key(cfg.seed, &[scale.geo_level as u64, scale.tech_level as u64]);
    let ens = match null_ensemble(&pruned, cfg.samples, cell_seed) {
        Ok(ens) => ens,
        Err(Error::Pathological(note)) => {
            return Ok(GridCell::degenerate_at(scale, pruned.nrows(), pruned.ncols(), note))
        }
        Err(e) => return Err(e),
    };
    let score = z_score(report.t, &ens);
    let degenerate = score.is_degenerate();
    let note = if degenerate { "zero-spread ensemble".to_string() } else { String::new() };
    Ok(GridCell {
        scale,
        rows: pruned.nrows(),
        cols: pruned.ncols(),
        fill: report.fill,
        t_emp: report.t,
        null_mean: ens.mean,
        null_std: ens.std,
        score,
        n_samples: ens.n_samples,
        degenerate,
        note,
        ensemble: Some(ens),
    })
}

/// Run the whole grid: one cell per scale pair up to the configured
/// finest levels, computed in parallel.
pub fn compute_grid(
    records: &[PatentRecord],
    ingest: &IngestConfig,
    cfg: &GridConfig,
) -> Result<ScaleGrid> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput("no records for grid computation".into()));
    }
    let finest = build_finest_map(records, ingest)?;
    let geo_depth = ingest.finest_geo_level;
    let tech_depth = ingest.finest_tech_level;
    let scales: Vec<ScalePair> = (1..=geo_depth)
        .flat_map(|g| (1..=tech_depth).map(move |t| ScalePair::new(g, t)))
        .collect();
    let cells: Vec<Result<GridCell>> = scales
        .par_iter()
        .map(|&scale| compute_cell(&finest, scale, cfg))
        .collect();
    let mut map = BTreeMap::new();
    for cell in cells {
        let cell = cell?;
        map.insert(cell.scale, cell);
    }
    Ok(ScaleGrid {
        cells: map,
        geo_depth,
        tech_depth,
        significance_threshold: cfg.significance_threshold,
    })
}

/// Partition non-degenerate cells by sign and significance.
pub fn extract_frontier(grid: &ScaleGrid) -> Frontier {
    let mut frontier = Frontier::default();
    for (&scale, cell) in &grid.cells {
        match cell.score.z {
            None => frontier.degenerate_cells.push(scale),
            Some(z) => {
                if z.abs() >= grid.significance_threshold {
                    if z < 0.0 {
                        frontier.nested_cells.push(scale);
                    } else {
                        frontier.antinested_cells.push(scale);
                    }
                } else {
                    frontier.insignificant_cells.push(scale);
                }
            }
        }
    }
    frontier
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.9}")
    }
}

/// One row per cell, columns exactly:
/// `geo_level,tech_level,rows,cols,fill,T_emp,null_mean,null_std,z,p_emp,n_samples,degenerate`.
pub fn write_grid_csv<W: Write>(grid: &ScaleGrid, out: &mut W) -> Result<()> {
    writeln!(
        out,
        "geo_level,tech_level,rows,cols,fill,T_emp,null_mean,null_std,z,p_emp,n_samples,degenerate"
    )?;
    for (scale, cell) in &grid.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            scale.geo_level,
            scale.tech_level,
            cell.rows,
            cell.cols,
            fmt_float(cell.fill),
            fmt_float(cell.t_emp),
            fmt_float(cell.null_mean),
            fmt_float(cell.null_std),
            fmt_float(cell.score.z.unwrap_or(f64::NAN)),
            fmt_float(cell.score.empirical_p),
            cell.n_samples,
            cell.degenerate,
        )?;
    }
    Ok(())
}

/// Reload a grid from its CSV export (ensembles are not recoverable).
pub fn read_grid_csv<R: BufRead>(reader: R, significance_threshold: f64) -> Result<ScaleGrid> {
    let mut cells = BTreeMap::new();
    let mut geo_depth = 0usize;
    let mut tech_depth = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 {
            if !line.starts_with("geo_level,tech_level,") {
                return Err(Error::Parse {
                    line: 1,
                    message: "not a grid CSV header".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 12 columns, found {}", fields.len()),
            });
        }
        let parse_usize = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("bad integer {s:?}"),
            })
        };
        let parse_f64 = |s: &str| -> Result<f64> {
            if s == "nan" {
                return Ok(f64::NAN);
            }
            s.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("bad float {s:?}"),
            })
        };
        let scale = ScalePair::new(parse_usize(fields[0])?, parse_usize(fields[1])?);
        let z = parse_f64(fields[8])?;
        let degenerate = fields[11] == "true";
        let cell = GridCell {
            scale,
            rows: parse_usize(fields[2])?,
            cols: parse_usize(fields[3])?,
            fill: parse_f64(fields[4])?,
            t_emp: parse_f64(fields[5])?,
            null_mean: parse_f64(fields[6])?,
            null_std: parse_f64(fields[7])?,
            score: ZScore {
                t_empirical: parse_f64(fields[5])?,
                z: if z.is_nan() { None } else { Some(z) },
                empirical_p: parse_f64(fields[9])?,
            },
            n_samples: parse_usize(fields[10])?,
            degenerate,
            note: String::new(),
            ensemble: None,
        };
        geo_depth = geo_depth.max(scale.geo_level);
        tech_depth = tech_depth.max(scale.tech_level);
        cells.insert(scale, cell);
    }
    if cells.is_empty() {
        return Err(Error::EmptyInput("grid CSV contains no cells".into()));
    }
    Ok(ScaleGrid { cells, geo_depth, tech_depth, significance_threshold })
}
