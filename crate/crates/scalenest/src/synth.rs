//! Synthetic generators with planted multiscale structure.
//!
//! `gen_nested` builds exact zero-temperature staircases for validating
//! the temperature measure. `gen_records` emits record files with a
//! two-level geographic and technological hierarchy whose within-block
//! structure is planted to be diversified (nested beyond the null),
//! specialized (anti-nested), or mixed across technology levels, so the
//! whole pipeline can be validated end to end without proprietary data.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{BinaryMap, CodePath, Dimension, PatentRecord, ScalePair};
use crate::recap::mix_key;
use crate::temperature::{solve_isocline, FILL_MIN};

/// Planted regime for `gen_records`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Children inherit nested slices of their parent's menu: high-res
    /// maps come out more nested than the null predicts.
    InheritedDiversification,
    /// Each parent's menu is split into disjoint slices, one per child:
    /// high-res maps come out less nested than the null predicts.
    DisjointSpecialization,
    /// Nested at the fine technology level but specialized across
    /// technology parents, so the grid's sign flips between tech levels.
    MixedFrontier,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inherited" | "diversification" | "inherited-diversification" => {
                Ok(Regime::InheritedDiversification)
            }
            "disjoint" | "specialization" | "disjoint-specialization" => {
                Ok(Regime::DisjointSpecialization)
            }
            "mixed" | "frontier" | "mixed-frontier" => Ok(Regime::MixedFrontier),
            other => Err(Error::Range(format!("unknown regime {other:?}"))),
        }
    }
}

/// Generator configuration.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_parents: usize,
    pub children_per_parent: usize,
    pub n_tech_parents: usize,
    pub tech_children_per_parent: usize,
    pub records_per_child: usize,
    pub regime: Regime,
    pub seed: u64,
    /// Probability that a record draws a uniformly random technology
    /// instead of one from its regime menu.
    pub noise: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.n_parents,
            self.children_per_parent,
            self.n_tech_parents,
            self.tech_children_per_parent,
            self.records_per_child,
        ];
        if counts.iter().any(|&c| c < 2) {
            return Err(Error::Range("all generator counts must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Range(format!("noise must be in [0, 1), got {}", self.noise)));
        }
        if self.total_techs() / 2 < self.children_per_parent {
            return Err(Error::Range(
                "technology space too small: need tech parents * tech children >= 2 * children per parent".into(),
            ));
        }
        Ok(())
    }

    pub fn total_techs(&self) -> usize {
        self.n_tech_parents * self.tech_children_per_parent
    }
}

/// Perfectly nested staircase: bit = 1 iff the cell center lies inside
/// the fill-matched presence region. The ones count is iterated to a
/// fixed point so the matrix is self-consistent at its own fill and
/// measures temperature exactly zero. The construction is deterministic;
/// the seed parameter mirrors the other generators' signatures.
pub fn gen_nested(rows: usize, cols: usize, fill: f64, _seed: u64) -> Result<BinaryMap> {
    if rows < 2 || cols < 2 {
        return Err(Error::Range(format!("need at least a 2x2 matrix, got {rows}x{cols}")));
    }
    if !(FILL_MIN..=1.0 - FILL_MIN).contains(&fill) {
        return Err(Error::DegenerateFill { fill });
    }
    let cells = rows * cols;
    let count_inside = |k: usize| -> Result<usize> {
        let iso = solve_isocline(k as f64 / cells as f64)?;
        let mut count = 0;
        for i in 0..rows {
            let y = (i as f64 + 0.5) / rows as f64;
            for j in 0..cols {
                let x = (j as f64 + 0.5) / cols as f64;
                if iso.contains(x, y) {
                    count += 1;
                }
            }
        }
        Ok(count)
    };
    // The inside count is monotone in the ones count (a larger fill
    // widens the region), so iterating reaches a fixed point.
    let mut k = ((fill * cells as f64).round() as usize).clamp(1, cells - 1);
    for _ in 0..=cells {
        let next = count_inside(k)?;
        if next == k {
            break;
        }
        k = next;
    }
    let iso = solve_isocline(k as f64 / cells as f64)?;
    let mut bits = ndarray::Array2::<u8>::zeros((rows, cols));
    for i in 0..rows {
        let y = (i as f64 + 0.5) / rows as f64;
        for j in 0..cols {
            let x = (j as f64 + 0.5) / cols as f64;
            bits[[i, j]] = u8::from(iso.contains(x, y));
        }
    }
    let row_labels = (0..rows)
        .map(|i| CodePath::parse(&format!("r{i:04}"), Dimension::Geo).unwrap())
        .collect();
    let col_labels = (0..cols)
        .map(|j| CodePath::parse(&format!("t{j:04}"), Dimension::Tech).unwrap())
        .collect();
    Ok(BinaryMap {
        scale: ScalePair::new(1, 1),
        row_labels,
        col_labels,
        bits,
        blocks: Some(vec![0..rows]),
    })
}

/// Menu length of one geographic parent over the flat technology list:
/// a staircase from the full list down to half of it.
fn parent_menu_len(spec: &SynthSpec, parent: usize) -> usize {
    let ttot = spec.total_techs();
    let k = spec.n_parents;
    let span = ttot / 2;
    (ttot - span * parent / (k - 1)).max(spec.children_per_parent)
}

/// Menu length of one child inside its parent's menu: a staircase from
/// the parent's full menu down to roughly a third of it.
fn child_menu_len(spec: &SynthSpec, parent: usize, child: usize) -> usize {
    let parent_len = parent_menu_len(spec, parent);
    let floor = (parent_len * 35 / 100).max(2);
    let span = parent_len - floor;
    (parent_len - span * child / (spec.children_per_parent - 1)).max(2)
}

/// Prefix depth inside every technology parent for the mixed regime,
/// decreasing both across geographic parents and across siblings.
fn mixed_prefix_depth(spec: &SynthSpec, parent: usize, child: usize) -> usize {
    let tc = spec.tech_children_per_parent;
    let fi = 1.0 - 0.4 * parent as f64 / (spec.n_parents - 1) as f64;
    let fj = 1.0 - 0.6 * child as f64 / (spec.children_per_parent - 1) as f64;
    ((tc as f64 * fi * fj).round() as usize).clamp(2.min(tc), tc)
}

fn tech_label(spec: &SynthSpec, flat: usize) -> String {
    let tc = spec.tech_children_per_parent;
    format!("T{:02}.S{:02}", flat / tc + 1, flat % tc + 1)
}

/// Draw from `weights[0..len]` proportionally; `cum` holds the running
/// prefix sums of the global popularity profile.
fn weighted_draw(rng: &mut ChaCha8Rng, cum: &[f64], len: usize) -> usize {
    let target = rng.random_range(0.0..cum[len - 1]);
    cum[..len].partition_point(|&c| c <= target).min(len - 1)
}

/// Generate planted records: a two-level geographic hierarchy
/// (`P01.C01`, ...) crossed with a two-level technological hierarchy
/// (`T01.S01`, ...). Each record names one child location and one fine
/// technology drawn from the regime's menu for that child.
pub fn gen_records(spec: &SynthSpec) -> Result<Vec<PatentRecord>> {
    spec.validate()?;
    let ttot = spec.total_techs();
    let tp = spec.n_tech_parents;
    let tc = spec.tech_children_per_parent;
    // popularity profile: earlier technologies are intrinsically more
    // common, so menu shares roughly track global shares and the RCA
    // test keeps the planted supports
    let mut cum = Vec::with_capacity(ttot);
    let mut acc = 0.0;
    for q in 0..ttot {
        acc += 1.0 / (q + 1) as f64;
        cum.push(acc);
    }
    // per-tech-parent popularity prefix sums for the mixed regime
    let mut cum_within = Vec::with_capacity(tc);
    let mut acc_w = 0.0;
    for v in 0..tc {
        acc_w += 1.0 / (v + 1) as f64;
        cum_within.push(acc_w);
    }

    let mut records = Vec::with_capacity(spec.n_parents * spec.children_per_parent);
    for parent in 0..spec.n_parents {
        for child in 0..spec.children_per_parent {
            let geo = CodePath::parse(
                &format!("P{:02}.C{:02}", parent + 1, child + 1),
                Dimension::Geo,
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_key(
                spec.seed,
                &[parent as u64, child as u64],
            ));
            for r in 0..spec.records_per_child {
                let flat = if spec.noise > 0.0 && rng.random_range(0.0..1.0) < spec.noise {
                    rng.random_range(0..ttot)
                } else {
                    match spec.regime {
                        Regime::InheritedDiversification => {
                            let len = child_menu_len(spec, parent, child);
                            weighted_draw(&mut rng, &cum, len)
                        }
                        Regime::DisjointSpecialization => {
                            let len = parent_menu_len(spec, parent);
                            let c = spec.children_per_parent;
                            let start = len * child / c;
                            let end = len * (child + 1) / c;
                            rng.random_range(start..end.max(start + 1))
                        }
                        Regime::MixedFrontier => {
                            let depth = mixed_prefix_depth(spec, parent, child);
                            let specialist = child % tp;
                            if rng.random_range(0.0..1.0) < 0.55 {
                                specialist * tc + rng.random_range(0..depth)
                            } else {
                                let u = rng.random_range(0..tp);
                                u * tc + weighted_draw(&mut rng, &cum_within, depth)
                            }
                        }
                    }
                };
                let tech = CodePath::parse(&tech_label(spec, flat), Dimension::Tech)?;
                records.push(PatentRecord::new(
                    format!("p{:02}c{:02}r{r:05}", parent + 1, child + 1),
                    vec![geo.clone()],
                    vec![tech],
                    None,
                ));
            }
        }
    }
    Ok(records)
}

/// Emit records in the same line-delimited format `ingest` consumes.
pub fn write_records_jsonl<W: Write>(records: &[PatentRecord], out: &mut W) -> Result<()> {
    for record in records {
        let geo: Vec<String> = record.geo_codes.iter().map(|c| c.to_string()).collect();
        let tech: Vec<String> = record.tech_codes.iter().map(|c| c.to_string()).collect();
        let mut obj = serde_json::json!({
            "id": record.id,
            "geo": geo,
            "tech": tech,
        });
        if let Some(date) = &record.date {
            obj["date"] = serde_json::Value::String(date.clone());
        }
        writeln!(out, "{obj}")?;
    }
    Ok(())
}
