use core::f64::consts::PI;

use num_traits::Float;

use crate::config::OptimizerConfig;

/// Linear warmup from 0 to `lr` over `warmup_steps`, then cosine
/// annealing down to `lr_final` at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, cfg: &OptimizerConfig) -> f64 {
    let warmup = cfg.warmup_steps;
    if step < warmup {
        return cfg.lr * step as f64 / warmup as f64;
    }
    let span = total_steps.saturating_sub(warmup);
    let progress = if span == 0 {
        1.0
    } else {
        ((step - warmup) as f64 / span as f64).min(1.0)
    };
    cfg.lr_final + (cfg.lr - cfg.lr_final) * (1.0 + Float::cos(PI * progress)) / 2.0
}
