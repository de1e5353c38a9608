//! Revealed comparative advantage binarization and pruning.

use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::{blocks_from_labels, BinaryMap, WeightedMap};

/// Threshold configuration for the advantage test.
#[derive(Debug, Clone, Copy)]
pub struct RcaConfig {
    /// Comparison is inclusive: a cell is set when RCA >= threshold.
    pub threshold: f64,
}

impl Default for RcaConfig {
    fn default() -> Self {
        RcaConfig { threshold: 1.0 }
    }
}

impl RcaConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::Range(format!("RCA threshold must be > 0, got {threshold}")));
        }
        Ok(RcaConfig { threshold })
    }
}

/// Balassa index of every cell:
/// `RCA[c,t] = (W[c,t] / sum_t W[c,t]) / (sum_c W[c,t] / sum_{c,t} W)`.
///
/// Rows or columns with zero sum yield RCA 0 for all their cells.
pub fn rca_matrix(map: &WeightedMap) -> Result<Array2<f64>> {
    let total = map.total();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("all-zero weighted map".into()));
    }
    let (m, n) = map.weights.dim();
    let row_sums: Vec<f64> = (0..m).map(|i| map.weights.row(i).sum()).collect();
    let col_sums: Vec<f64> = (0..n).map(|j| map.weights.column(j).sum()).collect();
    let mut rca = Array2::<f64>::zeros((m, n));
    for i in 0..m {
        if row_sums[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if col_sums[j] == 0.0 {
                continue;
            }
            rca[[i, j]] = (map.weights[[i, j]] / row_sums[i]) / (col_sums[j] / total);
        }
    }
    Ok(rca)
}

/// Binarize an RCA matrix: bit = 1 iff RCA >= threshold. Labels and scale
/// carry over from the weighted map; row blocks are recomputed from the
/// parent geographic level.
pub fn threshold_binarize(
    rca: &Array2<f64>,
    map: &WeightedMap,
    cfg: &RcaConfig,
) -> Result<BinaryMap> {
    if rca.dim() != map.weights.dim() {
        return Err(Error::ShapeMismatch(format!(
            "RCA matrix is {:?} but map is {:?}",
            rca.dim(),
            map.weights.dim()
        )));
    }
    let bits = rca.map(|&v| u8::from(v >= cfg.threshold));
    BinaryMap::new(map.scale, map.row_labels.clone(), map.col_labels.clone(), bits)
}

/// Labels removed by [`prune_empty`].
#[derive(Debug, Clone, Default)]
pub struct PruneReport {
    pub removed_rows: Vec<String>,
    pub removed_cols: Vec<String>,
}

impl PruneReport {
    pub fn is_empty(&self) -> bool {
        self.removed_rows.is_empty() && self.removed_cols.is_empty()
    }
}

/// Remove all-zero rows and columns until none remain. Removal is
/// iterative because dropping a column can empty a row. Errors when the
/// surviving matrix is smaller than 2x2.
pub fn prune_empty(map: &BinaryMap) -> Result<(BinaryMap, PruneReport)> {
    let mut keep_rows: Vec<usize> = (0..map.nrows()).collect();
    let mut keep_cols: Vec<usize> = (0..map.ncols()).collect();
    let mut report = PruneReport::default();
    loop {
        let mut changed = false;
        keep_rows.retain(|&i| {
            let alive = keep_cols.iter().any(|&j| map.bits[[i, j]] == 1);
            if !alive {
                report.removed_rows.push(map.row_labels[i].to_string());
                changed = true;
            }
            alive
        });
        keep_cols.retain(|&j| {
            let alive = keep_rows.iter().any(|&i| map.bits[[i, j]] == 1);
            if !alive {
                report.removed_cols.push(map.col_labels[j].to_string());
                changed = true;
            }
            alive
        });
        if !changed {
            break;
        }
    }
    if keep_rows.len() < 2 || keep_cols.len() < 2 {
        return Err(Error::DegenerateMatrix(format!(
            "pruning left a {}x{} matrix",
            keep_rows.len(),
            keep_cols.len()
        )));
    }
    let mut bits = Array2::<u8>::zeros((keep_rows.len(), keep_cols.len()));
    for (bi, &i) in keep_rows.iter().enumerate() {
        for (bj, &j) in keep_cols.iter().enumerate() {
            bits[[bi, bj]] = map.bits[[i, j]];
        }
    }
    let row_labels: Vec<_> = keep_rows.iter().map(|&i| map.row_labels[i].clone()).collect();
    let col_labels: Vec<_> = keep_cols.iter().map(|&j| map.col_labels[j].clone()).collect();
    let blocks = blocks_from_labels(&row_labels, map.scale.geo_level.saturating_sub(1))?;
    Ok((
        BinaryMap {
            scale: map.scale,
            row_labels,
            col_labels,
            bits,
            blocks: Some(blocks),
        },
        report,
    ))
}

/// Export as CSV: header row of column labels, first column of row
/// labels, cells "0"/"1".
pub fn write_binary_csv<W: Write>(map: &BinaryMap, out: &mut W) -> Result<()> {
    let header: Vec<String> = map.col_labels.iter().map(|c| c.to_string()).collect();
    writeln!(out, ",{}", header.join(","))?;
    for i in 0..map.nrows() {
        let cells: Vec<String> =
            (0..map.ncols()).map(|j| map.bits[[i, j]].to_string()).collect();
        writeln!(out, "{},{}", map.row_labels[i], cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CodePath, Dimension, ScalePair};
    use proptest::prelude::*;

    fn weighted(rows: Vec<Vec<f64>>) -> WeightedMap {
        let m = rows.len();
        let n = rows[0].len();
        let mut weights = Array2::<f64>::zeros((m, n));
        for (i, row) in rows.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                weights[[i, j]] = w;
            }
        }
        WeightedMap {
            scale: ScalePair::new(1, 1),
            row_labels: (0..m)
                .map(|i| CodePath::parse(&format!("g{i:02}"), Dimension::Geo).unwrap())
                .collect(),
            col_labels: (0..n)
                .map(|j| CodePath::parse(&format!("t{j:02}"), Dimension::Tech).unwrap())
                .collect(),
            weights,
        }
    }

    #[test]
    fn rca_worked_example() {
        let map = weighted(vec![vec![4.0, 1.0], vec![1.0, 4.0]]);
        let rca = rca_matrix(&map).unwrap();
        let expected = [[1.6, 0.4], [0.4, 1.6]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((rca[[i, j]] - expected[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rca_uniform_map_is_all_ones() {
        let map = weighted(vec![vec![2.5; 3]; 4]);
        let rca = rca_matrix(&map).unwrap();
        assert!(rca.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rca_zero_row_stays_zero() {
        let map = weighted(vec![vec![1.0, 2.0], vec![0.0, 0.0]]);
        let rca = rca_matrix(&map).unwrap();
        assert_eq!(rca[[1, 0]], 0.0);
        assert_eq!(rca[[1, 1]], 0.0);
    }

    #[test]
    fn rca_all_zero_map_is_degenerate() {
        let map = weighted(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(rca_matrix(&map), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn rca_row_mean_weighted_by_column_sums_is_one() {
        let map = weighted(vec![
            vec![4.0, 1.0, 0.5],
            vec![1.0, 4.0, 2.0],
            vec![0.3, 0.0, 5.0],
        ]);
        let rca = rca_matrix(&map).unwrap();
        let total = map.total();
        let col_sums: Vec<f64> = (0..3).map(|j| map.weights.column(j).sum()).collect();
        for i in 0..3 {
            let mean: f64 =
                (0..3).map(|j| rca[[i, j]] * col_sums[j] / total).sum();
            assert!((mean - 1.0).abs() < 1e-9, "row {i} mean {mean}");
        }
    }

    #[test]
    fn binarize_worked_example() {
        let map = weighted(vec![vec![4.0, 1.0], vec![1.0, 4.0]]);
        let rca = rca_matrix(&map).unwrap();
        let bin = threshold_binarize(&rca, &map, &RcaConfig::default()).unwrap();
        assert_eq!(bin.bits[[0, 0]], 1);
        assert_eq!(bin.bits[[0, 1]], 0);
        assert_eq!(bin.bits[[1, 0]], 0);
        assert_eq!(bin.bits[[1, 1]], 1);
    }

    #[test]
    fn binarize_boundary_is_inclusive() {
        let map = weighted(vec![vec![1.0; 2]; 2]);
        let rca = rca_matrix(&map).unwrap();
        let bin = threshold_binarize(&rca, &map, &RcaConfig::default()).unwrap();
        assert!(bin.bits.iter().all(|&b| b == 1));
    }

    #[test]
    fn binarize_threshold_above_max_gives_zeros() {
        let map = weighted(vec![vec![4.0, 1.0], vec![1.0, 4.0]]);
        let rca = rca_matrix(&map).unwrap();
        let bin = threshold_binarize(&rca, &map, &RcaConfig::new(2.0).unwrap()).unwrap();
        assert!(bin.bits.iter().all(|&b| b == 0));
    }

    #[test]
    fn prune_degenerate_result_is_error() {
        let map = crate::temperature::map_from_bits(vec![vec![1, 0], vec![0, 0]]);
        assert!(matches!(prune_empty(&map), Err(Error::DegenerateMatrix(_))));
    }

    #[test]
    fn prune_identity_when_nothing_empty() {
        let map = crate::temperature::map_from_bits(vec![vec![1, 1], vec![1, 0]]);
        let (pruned, report) = prune_empty(&map).unwrap();
        assert!(report.is_empty());
        assert_eq!(pruned.bits, map.bits);
    }

    #[test]
    fn prune_removes_middle_zero_row() {
        let map = crate::temperature::map_from_bits(vec![
            vec![1, 1, 0],
            vec![0, 0, 0],
            vec![0, 1, 1],
        ]);
        let (pruned, report) = prune_empty(&map).unwrap();
        assert_eq!(pruned.nrows(), 2);
        assert_eq!(pruned.ncols(), 3);
        assert_eq!(report.removed_rows, vec!["r0001".to_string()]);
        assert!(report.removed_cols.is_empty());
    }

    #[test]
    fn prune_cascades_column_then_row() {
        // dropping the only column of row 2 empties nothing at first pass
        // for rows, but the column removal forces a second sweep
        let map = crate::temperature::map_from_bits(vec![
            vec![1, 1, 0, 0],
            vec![1, 1, 0, 0],
            vec![0, 0, 0, 1],
            vec![1, 1, 0, 1],
        ]);
        // column 2 is empty; removing it leaves row 2 with only column 3
        let (pruned, report) = prune_empty(&map).unwrap();
        assert_eq!(pruned.ncols(), 3);
        assert_eq!(report.removed_cols, vec!["t0002".to_string()]);
        assert_eq!(pruned.nrows(), 4);
    }

    #[test]
    fn binary_csv_layout() {
        let map = crate::temperature::map_from_bits(vec![vec![1, 0], vec![0, 1]]);
        let mut buf = Vec::new();
        write_binary_csv(&map, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, ",t0000,t0001\nr0000,1,0\nr0001,0,1\n");
    }

    proptest! {
        // multiplying all weights by a positive constant leaves RCA fixed
        #[test]
        fn rca_scale_invariance(lambda in prop::sample::select(vec![1e-6f64, 1.0, 1e6]),
                                cells in proptest::collection::vec(0.0f64..10.0, 9)) {
            let rows: Vec<Vec<f64>> = cells.chunks(3).map(|c| c.to_vec()).collect();
            let base = weighted(rows.clone());
            prop_assume!(base.total() > 0.0);
            let scaled =
                weighted(rows.iter().map(|r| r.iter().map(|w| w * lambda).collect()).collect());
            let a = rca_matrix(&base).unwrap();
            let b = rca_matrix(&scaled).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        // raising the threshold never turns a 0 into a 1
        #[test]
        fn binarize_monotone_in_threshold(t1 in 0.1f64..3.0, t2 in 0.1f64..3.0,
                                          cells in proptest::collection::vec(0.0f64..10.0, 9)) {
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let rows: Vec<Vec<f64>> = cells.chunks(3).map(|c| c.to_vec()).collect();
            let map = weighted(rows);
            prop_assume!(map.total() > 0.0);
            let rca = rca_matrix(&map).unwrap();
            let a = threshold_binarize(&rca, &map, &RcaConfig::new(lo).unwrap()).unwrap();
            let b = threshold_binarize(&rca, &map, &RcaConfig::new(hi).unwrap()).unwrap();
            for (x, y) in a.bits.iter().zip(b.bits.iter()) {
                prop_assert!(y <= x);
            }
        }
    }
}
