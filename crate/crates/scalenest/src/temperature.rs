//! Nestedness temperature of a packed binary matrix.
//!
//! The perfectly nested presence region at a given fill is bounded by the
//! superellipse isocline `x^p + y^p = 1`, with `p` solved so that the
//! region's area inside the unit square equals the fill. Cell centers on
//! the wrong side of the isocline (an absence inside the region, or a
//! presence outside it) contribute an unexpectedness score equal to the
//! squared relative distance from the isocline along the (1,1) diagonal
//! direction. The temperature rescales the mean unexpectedness to the
//! conventional 0-100 range; 0 is perfectly nested.

use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{BinaryMap, CodePath};

/// Conventional normalization constant: the mean unexpectedness of a
/// random half-filled matrix, so random matrices score near 100.
pub const U_MAX: f64 = 0.04145;

/// Fills closer than this to 0 or 1 are declared degenerate.
pub const FILL_MIN: f64 = 1e-4;

/// Lanczos approximation of ln Gamma (g = 7, 9 coefficients, Godfrey's
/// constants). Relative accuracy is better than 1e-13 for arguments in
/// (1, 1e4), far beyond what the area identity needs.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

pub(crate) fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.5, "ln_gamma only used for arguments > 0.5, got {x}");
    let z = x - 1.0;
    let mut series = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + series.ln()
}

/// Area of `{x^p + y^p <= 1}` within the unit square:
/// `Gamma(1 + 1/p)^2 / Gamma(1 + 2/p)`.
pub fn superellipse_area(p: f64) -> f64 {
    (2.0 * ln_gamma(1.0 + 1.0 / p) - ln_gamma(1.0 + 2.0 / p)).exp()
}

/// The fill-matched boundary of the perfectly nested presence region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isocline {
    pub p: f64,
    pub fill: f64,
}

impl Isocline {
    /// `x^p + y^p`; at most 1 inside the presence region.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        x.powf(self.p) + y.powf(self.p)
    }

    /// Whether a point lies in the presence region (boundary included).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.evaluate(x, y) <= 1.0
    }

    /// Boundary height above `x`, clamped to the unit square.
    pub fn boundary_y(&self, x: f64) -> f64 {
        let rem = 1.0 - x.powf(self.p);
        if rem <= 0.0 {
            0.0
        } else {
            rem.powf(1.0 / self.p)
        }
    }
}

/// Find `p` such that the presence region's area equals `fill`, by
/// bisection on `ln p` over [-8, 8]. The area is strictly increasing in
/// `p`, so the bracket is valid for every admissible fill.
pub fn solve_isocline(fill: f64) -> Result<Isocline> {
    if !(FILL_MIN..=1.0 - FILL_MIN).contains(&fill) {
        return Err(Error::DegenerateFill { fill });
    }
    let (mut lo, mut hi) = (-8.0f64, 8.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = mid.exp();
        let area = superellipse_area(p);
        if (area - fill).abs() < 1e-9 {
            return Ok(Isocline { p, fill });
        }
        if area < fill {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // 200 halvings of a width-16 bracket shrink it below f64 resolution;
    // the tolerance check above always fires first for admissible fills.
    Ok(Isocline { p: (0.5 * (lo + hi)).exp(), fill })
}

/// Squared relative diagonal distance of a wrong-side cell from the
/// isocline. Zero when the bit agrees with its region, or when the cell
/// center lies exactly on the boundary.
///
/// The matrix must be packed: row 0 is the most diversified location,
/// column 0 the most ubiquitous technology, so presences are expected
/// near the origin of the unit square.
pub fn unexpectedness(cell: (usize, usize, u8), shape: (usize, usize), iso: &Isocline) -> f64 {
    let (i, j, bit) = cell;
    let (m, n) = shape;
    debug_assert!(i < m && j < n);
    let x = (j as f64 + 0.5) / n as f64;
    let y = (i as f64 + 0.5) / m as f64;
    let inside = iso.contains(x, y);
    if (bit == 1) == inside {
        return 0.0;
    }
    // Crossing of the isocline along the (1,1) direction through (x, y).
    // g(t) = (x+t)^p + (y+t)^p - 1 is monotone on the chord, negative
    // where the chord meets an axis and positive where it meets the far
    // edges, so a unique root exists.
    let t_min = -x.min(y);
    let t_max = (1.0 - x).min(1.0 - y);
    let g = |t: f64| (x + t).powf(iso.p) + (y + t).powf(iso.p) - 1.0;
    let (mut lo, mut hi) = (t_min, t_max);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let crossing = 0.5 * (lo + hi);
    let ratio = crossing.abs() / (t_max - t_min);
    ratio * ratio
}

/// One wrong-side cell and its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnexpectedCell {
    pub row: usize,
    pub col: usize,
    pub u: f64,
}

/// Temperature of one packed matrix plus per-cell diagnostics.
#[derive(Debug, Clone)]
pub struct TemperatureReport {
    /// 0 = perfectly nested; around 100 = random.
    pub t: f64,
    pub fill: f64,
    pub unexpectedness_sum: f64,
    pub unexpected_cells: Vec<UnexpectedCell>,
    pub matrix_shape: (usize, usize),
}

/// Measure the nestedness temperature of a pruned, packed map.
///
/// Cells are scored in row-major order and summed in that fixed order,
/// so the result does not depend on any parallel schedule upstream.
pub fn measure_temperature(map: &BinaryMap) -> Result<TemperatureReport> {
    let (m, n) = (map.nrows(), map.ncols());
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput("cannot measure an empty matrix".into()));
    }
    let fill = map.fill();
    if !(FILL_MIN..=1.0 - FILL_MIN).contains(&fill) {
        return Err(Error::DegenerateFill { fill });
    }
    let iso = solve_isocline(fill)?;
    let mut sum = 0.0;
    let mut unexpected = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let u = unexpectedness((i, j, map.bits[[i, j]]), (m, n), &iso);
            if u > 0.0 {
                sum += u;
                unexpected.push(UnexpectedCell { row: i, col: j, u });
            }
        }
    }
    let t = 100.0 * (sum / (m * n) as f64) / U_MAX;
    Ok(TemperatureReport {
        t,
        fill,
        unexpectedness_sum: sum,
        unexpected_cells: unexpected,
        matrix_shape: (m, n),
    })
}

/// Write the report as CSV: a comment header with the aggregate values,
/// then one `(row_label, col_label, u)` line per unexpected cell.
pub fn write_report_csv<W: Write>(
    report: &TemperatureReport,
    row_labels: &[CodePath],
    col_labels: &[CodePath],
    out: &mut W,
) -> Result<()> {
    writeln!(
        out,
        "# T={:.9} fill={:.9} m={} n={}",
        report.t, report.fill, report.matrix_shape.0, report.matrix_shape.1
    )?;
    writeln!(out, "row_label,col_label,u")?;
    for cell in &report.unexpected_cells {
        writeln!(out, "{},{},{:.9}", row_labels[cell.row], col_labels[cell.col], cell.u)?;
    }
    Ok(())
}

/// Build a map directly from explicit bits, labels named after indices.
/// Handy for tests and generators; rows get a single covering block.
pub fn map_from_bits(rows: Vec<Vec<u8>>) -> BinaryMap {
    use crate::model::{Dimension, ScalePair};
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let mut bits = ndarray::Array2::<u8>::zeros((m, n));
    for (i, row) in rows.iter().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            bits[[i, j]] = b;
        }
    }
    let row_labels = (0..m)
        .map(|i| CodePath::parse(&format!("r{i:04}"), Dimension::Geo).unwrap())
        .collect();
    let col_labels = (0..n)
        .map(|j| CodePath::parse(&format!("t{j:04}"), Dimension::Tech).unwrap())
        .collect();
    BinaryMap {
        scale: ScalePair::new(1, 1),
        row_labels,
        col_labels,
        bits,
        blocks: Some(vec![Range { start: 0, end: m }]),
    }
}
