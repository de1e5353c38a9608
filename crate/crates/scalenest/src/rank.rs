//! Fitness-complexity ranking and matrix packing.
//!
//! The coupled fixed point iterates
//!
//! ```text
//! F_c <- sum_t  M[c,t] * Q_t
//! Q_t <- 1 / sum_c M[c,t] * (1 / F_c)
//! ```
//!
//! from F = Q = 1, renormalizing each vector to mean 1 every step. The
//! raw values of the iteration need not converge on every matrix, but the
//! rank order stabilizes; results are accepted either when the values
//! settle below the tolerance or when the order has been stable for ten
//! consecutive iterations.

use std::io::Write;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{BinaryMap, CodePath};

pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-8;
const RANK_STABLE_RUNS: usize = 10;

/// Fitness per row and complexity per column, both mean-normalized to 1.
#[derive(Debug, Clone)]
pub struct FitnessResult {
    pub fitness: Vec<f64>,
    pub complexity: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn normalize_to_mean_one(v: &mut Array1<f64>) {
    let mean = v.mean().unwrap_or(1.0);
    if mean > 0.0 {
        v.mapv_inplace(|x| x / mean);
    }
}

fn max_relative_change(old: &Array1<f64>, new: &Array1<f64>) -> f64 {
    old.iter()
        .zip(new.iter())
        .map(|(&a, &b)| (b - a).abs() / a.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Indices sorted by descending value; ties keep index order. Used to
/// detect rank stability.
fn rank_order(values: &Array1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    idx
}

/// Run the fitness-complexity fixed point on a pruned map.
pub fn fitness_complexity(map: &BinaryMap, max_iter: usize, tol: f64) -> Result<FitnessResult> {
    let (m, n) = (map.nrows(), map.ncols());
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput("cannot rank an empty matrix".into()));
    }
    let degrees_ok = map.row_degrees().iter().all(|&d| d > 0)
        && map.col_degrees().iter().all(|&d| d > 0);
    if !degrees_ok {
        return Err(Error::Precondition(
            "fitness-complexity requires a pruned map with no zero rows or columns".into(),
        ));
    }
    let dense = map.bits.map(|&b| b as f64);
    let dense_t: Array2<f64> = dense.t().to_owned();

    let mut fitness = Array1::<f64>::ones(m);
    let mut complexity = Array1::<f64>::ones(n);
    let mut iterations = 0;
    let mut converged = false;
    let mut stable_runs = 0;
    let mut last_orders = (rank_order(&fitness), rank_order(&complexity));

    for iter in 1..=max_iter {
        iterations = iter;
        let mut next_fitness = dense.dot(&complexity);
        let inv_fitness = fitness.mapv(|f| 1.0 / f);
        let mut next_complexity = dense_t.dot(&inv_fitness).mapv(|s| 1.0 / s);
        normalize_to_mean_one(&mut next_fitness);
        normalize_to_mean_one(&mut next_complexity);

        let delta = max_relative_change(&fitness, &next_fitness)
            .max(max_relative_change(&complexity, &next_complexity));
        fitness = next_fitness;
        complexity = next_complexity;

        if delta < tol {
            converged = true;
            break;
        }
        let orders = (rank_order(&fitness), rank_order(&complexity));
        if orders == last_orders {
            stable_runs += 1;
            if stable_runs >= RANK_STABLE_RUNS {
                converged = true;
                break;
            }
        } else {
            stable_runs = 0;
            last_orders = orders;
        }
    }

    Ok(FitnessResult {
        fitness: fitness.to_vec(),
        complexity: complexity.to_vec(),
        iterations,
        converged,
    })
}

/// Reorder rows by descending fitness and columns by ascending complexity
/// (equivalently descending ubiquity on nested matrices). Ties break by
/// descending degree, then original position. Returns the packed map and
/// the permutations applied; `perm[new] = old`. The packed map drops its
/// row blocks since packing destroys their contiguity.
pub fn pack_matrix(
    map: &BinaryMap,
    ranks: &FitnessResult,
) -> Result<(BinaryMap, Vec<usize>, Vec<usize>)> {
    let (m, n) = (map.nrows(), map.ncols());
    if ranks.fitness.len() != m || ranks.complexity.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "ranking is {}x{} but map is {m}x{n}",
            ranks.fitness.len(),
            ranks.complexity.len()
        )));
    }
    let row_deg = map.row_degrees();
    let col_deg = map.col_degrees();

    let mut row_perm: Vec<usize> = (0..m).collect();
    row_perm.sort_by(|&a, &b| {
        ranks.fitness[b]
            .partial_cmp(&ranks.fitness[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(row_deg[b].cmp(&row_deg[a]))
            .then(a.cmp(&b))
    });
    let mut col_perm: Vec<usize> = (0..n).collect();
    col_perm.sort_by(|&a, &b| {
        ranks.complexity[a]
            .partial_cmp(&ranks.complexity[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(col_deg[b].cmp(&col_deg[a]))
            .then(a.cmp(&b))
    });

    let mut bits = Array2::<u8>::zeros((m, n));
    for (new_i, &old_i) in row_perm.iter().enumerate() {
        for (new_j, &old_j) in col_perm.iter().enumerate() {
            bits[[new_i, new_j]] = map.bits[[old_i, old_j]];
        }
    }
    let packed = BinaryMap {
        scale: map.scale,
        row_labels: row_perm.iter().map(|&i| map.row_labels[i].clone()).collect(),
        col_labels: col_perm.iter().map(|&j| map.col_labels[j].clone()).collect(),
        bits,
        blocks: None,
    };
    Ok((packed, row_perm, col_perm))
}

/// Export one score vector as CSV `(label, value)`, sorted descending.
pub fn write_scores_csv<W: Write>(
    labels: &[CodePath],
    values: &[f64],
    out: &mut W,
) -> Result<()> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    writeln!(out, "label,value")?;
    for i in order {
        writeln!(out, "{},{:.9}", labels[i], values[i])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temperature::map_from_bits;
    use proptest::prelude::*;

    #[test]
    fn all_ones_converges_in_one_iteration() {
        let map = map_from_bits(vec![vec![1; 4]; 4]);
        let result = fitness_complexity(&map, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 1);
        assert!(result.fitness.iter().all(|&f| (f - 1.0).abs() < 1e-12));
        assert!(result.complexity.iter().all(|&q| (q - 1.0).abs() < 1e-12));
    }

    #[test]
    fn triangular_orders_rows_and_columns() {
        let map = map_from_bits(vec![vec![1, 1, 1], vec![1, 1, 0], vec![1, 0, 0]]);
        let result = fitness_complexity(&map, 10_000, 1e-10).unwrap();
        assert!(result.converged);
        assert!(result.fitness[0] > result.fitness[1]);
        assert!(result.fitness[1] > result.fitness[2]);
        assert!(result.complexity[0] < result.complexity[1]);
        assert!(result.complexity[1] < result.complexity[2]);
    }

    #[test]
    fn zero_row_violates_precondition() {
        let map = map_from_bits(vec![vec![1, 1], vec![0, 0]]);
        assert!(matches!(
            fitness_complexity(&map, 10, 1e-8),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn mean_normalization_holds_on_convergence() {
        let map = map_from_bits(vec![
            vec![1, 1, 1, 1],
            vec![1, 1, 1, 0],
            vec![1, 1, 0, 0],
            vec![1, 0, 1, 0],
        ]);
        let r = fitness_complexity(&map, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(r.converged);
        let fmean: f64 = r.fitness.iter().sum::<f64>() / r.fitness.len() as f64;
        let qmean: f64 = r.complexity.iter().sum::<f64>() / r.complexity.len() as f64;
        assert!((fmean - 1.0).abs() < 1e-9);
        assert!((qmean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pack_already_packed_is_identity() {
        let map = map_from_bits(vec![vec![1, 1, 1], vec![1, 1, 0], vec![1, 0, 0]]);
        let ranks = fitness_complexity(&map, 10_000, 1e-10).unwrap();
        let (packed, rows, cols) = pack_matrix(&map, &ranks).unwrap();
        assert_eq!(rows, vec![0, 1, 2]);
        assert_eq!(cols, vec![0, 1, 2]);
        assert_eq!(packed.bits, map.bits);
        assert!(packed.blocks.is_none());
    }

    #[test]
    fn pack_reverses_reversed_triangle() {
        let map = map_from_bits(vec![vec![1, 0, 0], vec![1, 1, 0], vec![1, 1, 1]]);
        let ranks = fitness_complexity(&map, 10_000, 1e-10).unwrap();
        let (packed, rows, cols) = pack_matrix(&map, &ranks).unwrap();
        assert_eq!(rows, vec![2, 1, 0]);
        assert_eq!(cols, vec![0, 1, 2]);
        let expected = map_from_bits(vec![vec![1, 1, 1], vec![1, 1, 0], vec![1, 0, 0]]);
        assert_eq!(packed.bits, expected.bits);
    }

    #[test]
    fn pack_ties_follow_original_order() {
        let map = map_from_bits(vec![vec![1, 0, 1], vec![1, 1, 0], vec![1, 0, 1]]);
        let ranks = fitness_complexity(&map, 10_000, 1e-10).unwrap();
        let (_, rows, _) = pack_matrix(&map, &ranks).unwrap();
        // rows 0 and 2 are identical, so their relative order is preserved
        let pos0 = rows.iter().position(|&r| r == 0).unwrap();
        let pos2 = rows.iter().position(|&r| r == 2).unwrap();
        assert!(pos0 < pos2);
    }

    #[test]
    fn pack_is_idempotent() {
        let map = map_from_bits(vec![
            vec![0, 1, 1, 0],
            vec![1, 1, 1, 1],
            vec![1, 0, 0, 0],
            vec![1, 1, 0, 1],
        ]);
        let ranks = fitness_complexity(&map, 10_000, 1e-10).unwrap();
        let (packed, _, _) = pack_matrix(&map, &ranks).unwrap();
        let ranks2 = fitness_complexity(&packed, 10_000, 1e-10).unwrap();
        let (_, rows, cols) = pack_matrix(&packed, &ranks2).unwrap();
        assert_eq!(rows, (0..4).collect::<Vec<_>>());
        assert_eq!(cols, (0..4).collect::<Vec<_>>());
    }

    // every staircase (perfectly nested) matrix up to 8x8: fitness order
    // equals row-degree order, complexity order reverses column degrees
    #[test]
    fn staircases_rank_by_degree() {
        for (m, n) in [(3usize, 4usize), (5, 5), (8, 6), (8, 8)] {
            // build a staircase with strictly decreasing row widths
            let rows: Vec<Vec<u8>> = (0..m)
                .map(|i| {
                    let width = n - (i * (n - 1)) / m;
                    (0..n).map(|j| u8::from(j < width)).collect()
                })
                .collect();
            let map = map_from_bits(rows);
            let r = fitness_complexity(&map, 10_000, 1e-10).unwrap();
            let row_deg = map.row_degrees();
            let col_deg = map.col_degrees();
            for i in 1..m {
                if row_deg[i - 1] > row_deg[i] {
                    assert!(
                        r.fitness[i - 1] > r.fitness[i],
                        "{m}x{n}: fitness not ordered at row {i}"
                    );
                }
            }
            for j in 1..n {
                if col_deg[j - 1] > col_deg[j] {
                    assert!(
                        r.complexity[j - 1] < r.complexity[j],
                        "{m}x{n}: complexity not ordered at col {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn scores_csv_sorted_descending() {
        let labels: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|s| crate::model::CodePath::parse(s, crate::model::Dimension::Geo).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_scores_csv(&labels, &[0.5, 2.0, 1.0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "label,value");
        assert!(lines[1].starts_with("b,"));
        assert!(lines[2].starts_with("c,"));
        assert!(lines[3].starts_with("a,"));
    }

    proptest! {
        // packing permutes rows and columns; the multisets are preserved
        #[test]
        fn pack_preserves_row_multiset(seed_rows in proptest::collection::vec(
            proptest::collection::vec(0u8..2, 4), 4)) {
            let map = map_from_bits(seed_rows.clone());
            prop_assume!(map.row_degrees().iter().all(|&d| d > 0));
            prop_assume!(map.col_degrees().iter().all(|&d| d > 0));
            let ranks = fitness_complexity(&map, 2000, 1e-8).unwrap();
            let (packed, rows, cols) = pack_matrix(&map, &ranks).unwrap();
            let mut sorted_rows = rows.clone();
            sorted_rows.sort_unstable();
            prop_assert_eq!(sorted_rows, (0..4).collect::<Vec<_>>());
            let mut sorted_cols = cols.clone();
            sorted_cols.sort_unstable();
            prop_assert_eq!(sorted_cols, (0..4).collect::<Vec<_>>());
            // row vectors survive as a multiset
            let mut original: Vec<Vec<u8>> = seed_rows;
            let mut after: Vec<Vec<u8>> = (0..4)
                .map(|i| (0..4).map(|j| packed.bits[[i, j]]).collect())
                .collect();
            for row in &mut after {
                let mut with_cols: Vec<(usize, u8)> =
                    cols.iter().zip(row.iter()).map(|(&c, &b)| (c, b)).collect();
                with_cols.sort_unstable();
                *row = with_cols.into_iter().map(|(_, b)| b).collect();
            }
            original.sort_unstable();
            after.sort_unstable();
            prop_assert_eq!(original, after);
        }
    }
}
