//! Parameter and FLOP accounting derived from the wiring alone.
//!
//! FLOPs are counted per batch item: two per multiply-accumulate in every
//! convolution, two per element for batch norm (scale and shift), one per
//! element for ReLU, residual adds, SE gating and the weighted tower sum
//! (two there: multiply and add), and three per output element for the
//! log-softmax. Removed towers cost nothing.

use crate::config::ModelConfig;
use crate::ops::ConvSpec;

use super::mask::TowerMask;

fn sep_unit_params(cin: usize, cout: usize, k: usize) -> usize {
    cin * k + cin * cout + 2 * cout
}

fn block_params(c: usize, k: usize) -> usize {
    c * k + c * c + 2 * c + c * c + 2 * c
}

fn se_params(c: usize, b: usize) -> usize {
    c * b + b + b * c + c
}

fn tower_params(cfg: &ModelConfig) -> usize {
    cfg.blocks_per_tower * block_params(cfg.channels, cfg.kernel_size)
        + se_params(cfg.channels, cfg.se_bottleneck())
}

fn kept(cfg: &ModelConfig, mask: Option<&TowerMask>) -> alloc::vec::Vec<usize> {
    mask.map_or_else(|| cfg.towers.clone(), TowerMask::kept)
}

/// Cost of one top-level component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentCost {
    /// `prologue`, `mb1`, `mb2`, ... or `epilogue`.
    pub name: alloc::string::String,
    /// Frames entering the component.
    pub frames_in: usize,
    /// Towers evaluated (zero outside mega-blocks).
    pub towers: usize,
    pub params: usize,
    pub flops: u64,
}

/// Per-component parameters and FLOPs for one batch item with `time` input
/// frames. Removed towers cost nothing.
pub fn breakdown(cfg: &ModelConfig, time: usize, mask: Option<&TowerMask>) -> alloc::vec::Vec<ComponentCost> {
    let (c, k) = (cfg.channels, cfg.kernel_size);
    let mut out = alloc::vec::Vec::with_capacity(cfg.towers.len() + 2);
    out.push(ComponentCost {
        name: "prologue".into(),
        frames_in: time,
        towers: 0,
        params: sep_unit_params(cfg.feature_dim, c, k),
        flops: sep_unit_flops(cfg.feature_dim, c, k, 2, time),
    });
    let mut t = time.div_ceil(2);
    for (i, &n) in kept(cfg, mask).iter().enumerate() {
        let frames_in = t;
        let mut flops = sep_unit_flops(c, c, k, 1, t) + sep_unit_flops(c, c, k, 2, t);
        t = t.div_ceil(2);
        flops += n as u64 * (tower_flops(cfg, t) + 2 * (c * t) as u64);
        out.push(ComponentCost {
            name: alloc::format!("mb{}", i + 1),
            frames_in,
            towers: n,
            params: 2 * sep_unit_params(c, c, k) + n * tower_params(cfg),
            flops,
        });
    }
    let classes = cfg.num_classes();
    out.push(ComponentCost {
        name: "epilogue".into(),
        frames_in: t,
        towers: 0,
        params: sep_unit_params(c, c, cfg.epilogue_kernel()) + c * classes + classes,
        flops: sep_unit_flops(c, c, cfg.epilogue_kernel(), 1, t)
            + 2 * ConvSpec::pointwise(c, classes).macs(t)
            + (classes * t) as u64
            + 3 * (classes * t) as u64,
    });
    out
}

/// Trainable parameters of the towers kept by `mask` plus everything
/// outside the towers. Batch-norm running statistics are not counted.
pub fn param_count(cfg: &ModelConfig, mask: Option<&TowerMask>) -> usize {
    breakdown(cfg, 1, mask).iter().map(|r| r.params).sum()
}

/// Parameters in the towers of one mega-block.
pub fn megablock_tower_params(cfg: &ModelConfig, active_towers: usize) -> usize {
    active_towers * tower_params(cfg)
}

fn sep_unit_flops(cin: usize, cout: usize, k: usize, stride: usize, time: usize) -> u64 {
    let dw = ConvSpec::depthwise(cin, k, stride);
    let t_out = dw.out_time(time);
    let pw = ConvSpec::pointwise(cin, cout);
    2 * dw.macs(time) + 2 * pw.macs(t_out) + (3 * cout * t_out) as u64
}

fn tower_flops(cfg: &ModelConfig, time: usize) -> u64 {
    let c = cfg.channels;
    let b = cfg.se_bottleneck();
    let ct = (c * time) as u64;
    let block = 2 * ConvSpec::depthwise(c, cfg.kernel_size, 1).macs(time)
        + 4 * ConvSpec::pointwise(c, c).macs(time)
        + 4 * ct // two batch norms
        + 2 * ct; // residual add, relu
    let se = ct + 2 * (2 * c * b) as u64 + (b + c) as u64 + ct;
    cfg.blocks_per_tower as u64 * block + se
}

/// FLOPs for one batch item with `time` input frames.
pub fn flop_count(cfg: &ModelConfig, time: usize, mask: Option<&TowerMask>) -> u64 {
    breakdown(cfg, time, mask).iter().map(|r| r.flops).sum()
}

/// FLOPs spent inside the towers of mega-block `index`.
pub fn megablock_tower_flops(cfg: &ModelConfig, time: usize, index: usize, active_towers: usize) -> u64 {
    let t = cfg.output_time_after(index + 1, time);
    active_towers as u64 * tower_flops(cfg, t)
}

impl ModelConfig {
    /// Frames after the prologue and the first `stages - 1` mega-blocks'
    /// downsampling, i.e. the tower length in mega-block `stages - 1`
    /// (0-based) when `stages >= 1`.
    pub fn output_time_after(&self, stages: usize, time: usize) -> usize {
        (0..=stages).fold(time, |t, _| t.div_ceil(2))
    }
}
