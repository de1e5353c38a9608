//! The Reshuffled Capabilities (ReCap) null model.
//!
//! A null sample keeps every technology column's ones count fixed inside
//! each row block (the children of one coarser-level location) while
//! placing them uniformly at random among the block's rows. Column sums
//! are therefore preserved exactly, globally and per block, while row
//! sums vary freely within blocks.
//!
//! Randomness comes from an independent ChaCha stream per
//! (seed, sample index, block, column), so any parallel schedule
//! produces identical samples.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binarize::prune_empty;
use crate::error::{Error, Result};
use crate::model::BinaryMap;
use crate::rank::{fitness_complexity, pack_matrix, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::temperature::measure_temperature;

/// Attempts per ensemble slot before the input is declared pathological.
const MAX_REDRAWS_PER_SLOT: usize = 64;

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold the parts into one stream key; order-sensitive.
pub(crate) fn mix_key(seed: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix(seed);
    for &p in parts {
        state = splitmix(state ^ p);
    }
    state
}

/// Draw one null sample: an independent uniform permutation of every
/// (block, column) segment. Blocks with a single row and segments that
/// are all zeros or all ones are returned untouched.
pub fn recap_sample(map: &BinaryMap, seed: u64, index: u64) -> Result<BinaryMap> {
    let blocks = map
        .blocks
        .as_ref()
        .ok_or_else(|| Error::Precondition("recap requires a map with row blocks".into()))?;
    let mut bits = map.bits.clone();
    let n = map.ncols();
    for (block_id, range) in blocks.iter().enumerate() {
        let len = range.len();
        if len < 2 {
            continue;
        }
        for col in 0..n {
            let mut segment: Vec<u8> =
                (range.start..range.end).map(|i| map.bits[[i, col]]).collect();
            let ones: usize = segment.iter().map(|&b| b as usize).sum();
            if ones == 0 || ones == len {
                continue;
            }
            let key = mix_key(seed, &[index, block_id as u64, col as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            // Fisher-Yates; a uniform permutation of the segment places
            // its ones uniformly among the block's rows.
            for i in (1..len).rev() {
                let j = rng.random_range(0..=i);
                segment.swap(i, j);
            }
            for (offset, &b) in segment.iter().enumerate() {
                bits[[range.start + offset, col]] = b;
            }
        }
    }
    Ok(BinaryMap {
        scale: map.scale,
        row_labels: map.row_labels.clone(),
        col_labels: map.col_labels.clone(),
        bits,
        blocks: Some(blocks.clone()),
    })
}

/// Null distribution of temperatures.
#[derive(Debug, Clone)]
pub struct NullEnsemble {
    pub n_samples: usize,
    pub temperatures: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub seed: u64,
    /// Samples that collapsed under pruning and were redrawn.
    pub degenerate_redraws: usize,
}

/// Temperature of one null sample: shuffle, prune, rank, pack, measure.
/// `Ok(None)` marks a degenerate draw (the pruned matrix is too small or
/// its fill leaves the measurable range).
fn sample_temperature(map: &BinaryMap, seed: u64, index: u64) -> Result<Option<f64>> {
    let sample = recap_sample(map, seed, index)?;
    let pruned = match prune_empty(&sample) {
        Ok((pruned, _)) => pruned,
        Err(Error::DegenerateMatrix(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let ranks = fitness_complexity(&pruned, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let (packed, _, _) = pack_matrix(&pruned, &ranks)?;
    match measure_temperature(&packed) {
        Ok(report) => Ok(Some(report.t)),
        Err(Error::DegenerateFill { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Build a null ensemble of `n` temperatures. Slot `i` draws sample
/// indices `i, i + n, i + 2n, ...` until one survives the pipeline, so
/// results do not depend on evaluation order or thread count; the mean
/// and standard deviation are accumulated in slot order.
pub fn null_ensemble(map: &BinaryMap, n: usize, seed: u64) -> Result<NullEnsemble> {
    if n < 2 {
        return Err(Error::Range(format!("ensemble size must be >= 2, got {n}")));
    }
    let slots: Vec<Result<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|slot| {
            let mut redraws = 0usize;
            for attempt in 0..MAX_REDRAWS_PER_SLOT {
                let index = (slot + attempt * n) as u64;
                match sample_temperature(map, seed, index)? {
                    Some(t) => return Ok((t, redraws)),
                    None => redraws += 1,
                }
            }
            Err(Error::Pathological(format!(
                "slot {slot}: {MAX_REDRAWS_PER_SLOT} consecutive degenerate null samples"
            )))
        })
        .collect();

    let mut temperatures = Vec::with_capacity(n);
    let mut degenerate_redraws = 0usize;
    for slot in slots {
        let (t, redraws) = slot?;
        temperatures.push(t);
        degenerate_redraws += redraws;
    }
    if degenerate_redraws > n {
        return Err(Error::Pathological(format!(
            "{degenerate_redraws} degenerate redraws for {n} samples"
        )));
    }
    let mean = temperatures.iter().sum::<f64>() / n as f64;
    let var = temperatures.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n as f64;
    Ok(NullEnsemble {
        n_samples: n,
        temperatures,
        mean,
        std: var.sqrt(),
        seed,
        degenerate_redraws,
    })
}

/// Signed distance of the empirical temperature from the null mean.
/// Negative z means more nested than the null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZScore {
    pub t_empirical: f64,
    /// `None` when the ensemble is degenerate (zero spread).
    pub z: Option<f64>,
    /// Rank-based, two-sided: `(1 + #at least as extreme, same side) / (n + 1)`.
    pub empirical_p: f64,
}

impl ZScore {
    pub fn is_degenerate(&self) -> bool {
        self.z.is_none()
    }
}

pub fn z_score(t_emp: f64, ens: &NullEnsemble) -> ZScore {
    if ens.std == 0.0 {
        return ZScore { t_empirical: t_emp, z: None, empirical_p: 1.0 };
    }
    let z = (t_emp - ens.mean) / ens.std;
    let extreme = if t_emp <= ens.mean {
        ens.temperatures.iter().filter(|&&t| t <= t_emp).count()
    } else {
        ens.temperatures.iter().filter(|&&t| t >= t_emp).count()
    };
    let empirical_p = (1 + extreme) as f64 / (ens.n_samples + 1) as f64;
    ZScore { t_empirical: t_emp, z: Some(z), empirical_p }
}

/// Export as CSV: a comment header with the summary, then one
/// `(index, temperature)` row per sample.
pub fn write_ensemble_csv<W: Write>(ens: &NullEnsemble, out: &mut W) -> Result<()> {
    writeln!(
        out,
        "# mean={:.9} std={:.9} seed={} degenerate_redraws={}",
        ens.mean, ens.std, ens.seed, ens.degenerate_redraws
    )?;
    writeln!(out, "index,temperature")?;
    for (i, t) in ens.temperatures.iter().enumerate() {
        writeln!(out, "{i},{t:.9}")?;
    }
    Ok(())
}
