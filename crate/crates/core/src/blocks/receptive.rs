//! Analytic receptive field of the convolution stack.
//!
//! Only the depthwise convolutions have a temporal extent; pointwise
//! convolutions and residual branches add nothing. The SE gate pools over
//! the whole sequence, so strictly speaking every output frame sees every
//! input frame. The figure reported here is the local receptive field with
//! SE left out.

use alloc::vec::Vec;

use crate::config::ModelConfig;

/// A temporal convolution on the deepest path: `(kernel_size, stride)`.
pub type ConvStep = (usize, usize);

/// `1 + sum_i (k_i - 1) * prod_{j < i} s_j`.
pub fn receptive_field_of(path: &[ConvStep]) -> usize {
    let mut jump = 1;
    let mut rf = 1;
    for &(k, s) in path {
        rf += (k - 1) * jump;
        jump *= s;
    }
    rf
}

/// Depthwise convolutions a frame passes through from input to output.
pub fn conv_path(cfg: &ModelConfig) -> Vec<ConvStep> {
    let k = cfg.kernel_size;
    let mut path = Vec::new();
    path.push((k, 2));
    for _ in &cfg.towers {
        path.push((k, 1));
        path.push((k, 2));
        path.extend(core::iter::repeat_n((k, 1), cfg.blocks_per_tower));
    }
    path.push((cfg.epilogue_kernel(), 1));
    path
}

/// Local receptive field in input frames.
pub fn receptive_field(cfg: &ModelConfig) -> usize {
    receptive_field_of(&conv_path(cfg))
}
