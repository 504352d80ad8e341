//! Accuracy against the number of removed towers.

use std::fmt;
use std::str::FromStr;

use nmm_core::mixture::{flop_count, param_count};
use nmm_core::train::{evaluate, Batch};
use nmm_core::{AggregationMode, Executor, Model, Rng, TowerMask};

use crate::report::{mode_name, rate, Table, INFERENCE_MODES};

/// Which mega-blocks lose towers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    First,
    Last,
    All,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::First, Target::Last, Target::All];

    fn hits(self, index: usize, count: usize) -> bool {
        match self {
            Target::First => index == 0,
            Target::Last => index + 1 == count,
            Target::All => true,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::First => "first",
            Target::Last => "last",
            Target::All => "all",
        })
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "first" => Ok(Target::First),
            "last" => Ok(Target::Last),
            "all" => Ok(Target::All),
            _ => Err(format!("unknown target {s:?}; expected first, last or all")),
        }
    }
}

/// Order in which towers are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Removal {
    /// Smallest output L2 norm on the calibration batch first.
    LowestL2,
    /// A seeded random permutation per mega-block.
    Random(u64),
}

impl fmt::Display for Removal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Removal::LowestL2 => f.write_str("lowest-l2"),
            Removal::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for Removal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "lowest-l2" {
            return Ok(Removal::LowestL2);
        }
        if let Some(seed) = s.strip_prefix("random:") {
            return seed
                .parse()
                .map(Removal::Random)
                .map_err(|_| format!("bad seed in {s:?}"));
        }
        Err(format!("unknown removal policy {s:?}; expected lowest-l2 or random:<seed>"))
    }
}

/// Removal order for every mega-block, first-removed first.
pub fn removal_order<E: Executor>(
    model: &Model<f32>,
    calibration: &Batch<f32>,
    removal: Removal,
    exec: &E,
) -> nmm_core::Result<Vec<Vec<usize>>> {
    match removal {
        Removal::LowestL2 => {
            let norms = model.tower_output_norms(&calibration.features, exec)?;
            Ok(norms
                .iter()
                .map(|n| {
                    let mut idx: Vec<usize> = (0..n.len()).collect();
                    idx.sort_by(|&a, &b| n[a].total_cmp(&n[b]).then(a.cmp(&b)));
                    idx
                })
                .collect())
        }
        Removal::Random(seed) => {
            let mut rng = Rng::new(seed);
            Ok(model
                .config
                .towers
                .iter()
                .map(|&n| {
                    let mut idx: Vec<usize> = (0..n).collect();
                    for i in (1..n).rev() {
                        let j = rng.below(i + 1);
                        idx.swap(i, j);
                    }
                    idx
                })
                .collect())
        }
    }
}

/// Mask removing the first `removed` towers of `order` in every targeted
/// mega-block.
pub fn removal_mask(order: &[Vec<usize>], target: Target, removed: usize) -> nmm_core::Result<TowerMask> {
    let count = order.len();
    let blocks = order
        .iter()
        .enumerate()
        .map(|(i, ord)| {
            let mut bits = vec![true; ord.len()];
            if target.hits(i, count) {
                for &t in ord.iter().take(removed) {
                    bits[t] = false;
                }
            }
            bits
        })
        .collect();
    TowerMask::new(blocks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub target: Target,
    pub removed: usize,
    pub mode: AggregationMode,
    pub mask: TowerMask,
    pub params: usize,
    pub flops: u64,
    pub ter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub removal: Removal,
    pub max_removed: usize,
    /// Set when the requested maximum had to be lowered.
    pub clamped_from: Option<usize>,
    pub rows: Vec<SweepRow>,
}

/// Evaluates every (target, removed, mode) cell. `max_removed` defaults
/// to, and is clamped at, one less than the smallest tower count.
#[allow(clippy::too_many_arguments)]
pub fn sweep<E: Executor>(
    model: &Model<f32>,
    held_out: &Batch<f32>,
    calibration: &Batch<f32>,
    targets: &[Target],
    max_removed: Option<usize>,
    removal: Removal,
    exec: &E,
) -> nmm_core::Result<Sweep> {
    let limit = model.config.towers.iter().copied().min().unwrap_or(1) - 1;
    let requested = max_removed.unwrap_or(limit);
    let (max_removed, clamped_from) = if requested > limit {
        (limit, Some(requested))
    } else {
        (requested, None)
    };
    let order = removal_order(model, calibration, removal, exec)?;
    let frames = held_out.features.time();
    let mut rows = Vec::new();
    for &target in targets {
        for removed in 0..=max_removed {
            let mask = removal_mask(&order, target, removed)?;
            let params = param_count(&model.config, Some(&mask));
            let flops = flop_count(&model.config, frames, Some(&mask));
            for mode in INFERENCE_MODES {
                let ter = evaluate(model, held_out, mode, Some(&mask), exec)?;
                rows.push(SweepRow {
                    target,
                    removed,
                    mode,
                    mask: mask.clone(),
                    params,
                    flops,
                    ter,
                });
            }
        }
    }
    Ok(Sweep {
        removal,
        max_removed,
        clamped_from,
        rows,
    })
}

impl Sweep {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "target", "removed", "mode", "mask", "params", "flops", "ter",
        ]);
        t.note(format!("removal={}", self.removal));
        if let Some(req) = self.clamped_from {
            t.note(format!(
                "max_removed clamped from {req} to {}",
                self.max_removed
            ));
        }
        for r in &self.rows {
            t.push(vec![
                r.target.to_string(),
                r.removed.to_string(),
                mode_name(r.mode).into(),
                r.mask.to_string(),
                r.params.to_string(),
                r.flops.to_string(),
                rate(r.ter),
            ]);
        }
        t
    }
}
