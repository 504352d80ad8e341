//! Configuration types and their validation.
//!
//! With the `serde` feature these map one-to-one onto the sections of the
//! text config file; unknown keys are rejected and missing keys take the
//! defaults below.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

fn check(ok: bool, field: &str, reason: impl Into<alloc::string::String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}

fn prob(v: f64, field: &str) -> Result<()> {
    check(
        (0.0..1.0).contains(&v),
        field,
        format!("must be in [0, 1), got {v}"),
    )
}

/// Architecture of the whole network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct ModelConfig {
    /// Channels in every tower.
    pub channels: usize,
    /// Residual blocks per tower.
    pub blocks_per_tower: usize,
    pub kernel_size: usize,
    /// Number of parallel towers in each mega-block.
    pub towers: Vec<usize>,
    pub feature_dim: usize,
    /// Label alphabet size, blank excluded. The output has `vocab_size + 1`
    /// channels and the blank is the last one.
    pub vocab_size: usize,
    /// Probability of dropping a whole tower output during training.
    pub tower_dropout_p: f64,
    /// Element-wise dropout inside blocks.
    pub dropout_p: f64,
    /// SE bottleneck is `max(1, channels / se_reduction)`.
    pub se_reduction: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 384,
            blocks_per_tower: 5,
            kernel_size: 11,
            towers: vec![5, 6, 7],
            feature_dim: 80,
            vocab_size: 28,
            tower_dropout_p: 0.1,
            dropout_p: 0.1,
            se_reduction: 8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.channels >= 1, "model.channels", "must be at least 1")?;
        check(
            self.blocks_per_tower >= 1,
            "model.blocks_per_tower",
            "must be at least 1",
        )?;
        check(
            self.kernel_size % 2 == 1,
            "model.kernel_size",
            format!("must be odd and positive, got {}", self.kernel_size),
        )?;
        check(
            !self.towers.is_empty(),
            "model.towers",
            "need at least one mega-block",
        )?;
        check(
            self.towers.iter().all(|&n| n >= 1),
            "model.towers",
            "every mega-block needs at least one tower",
        )?;
        check(self.feature_dim >= 1, "model.feature_dim", "must be at least 1")?;
        check(self.vocab_size >= 1, "model.vocab_size", "must be at least 1")?;
        prob(self.tower_dropout_p, "model.tower_dropout_p")?;
        prob(self.dropout_p, "model.dropout_p")?;
        check(self.se_reduction >= 1, "model.se_reduction", "must be at least 1")?;
        Ok(())
    }

    pub fn se_bottleneck(&self) -> usize {
        (self.channels / self.se_reduction).max(1)
    }

    pub fn epilogue_kernel(&self) -> usize {
        2 * self.kernel_size - 1
    }

    /// Output channels including the blank.
    pub fn num_classes(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn blank_id(&self) -> usize {
        self.vocab_size
    }

    /// Overall time reduction: prologue plus one halving per mega-block.
    pub fn downsampling(&self) -> usize {
        1 << (self.towers.len() + 1)
    }

    pub fn output_time(&self, input_time: usize) -> usize {
        (0..=self.towers.len()).fold(input_time, |t, _| t.div_ceil(2))
    }
}

/// NovoGrad hyper-parameters and the learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.1,
            lr_final: 1e-5,
            beta1: 0.8,
            beta2: 0.25,
            weight_decay: 1e-3,
            warmup_steps: 1000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        check(
            self.lr.is_finite() && self.lr > 0.0,
            "optimizer.lr",
            format!("must be positive, got {}", self.lr),
        )?;
        check(
            self.lr_final >= 0.0 && self.lr_final < self.lr,
            "optimizer.lr_final",
            format!("must be in [0, lr), got {}", self.lr_final),
        )?;
        for (v, field) in [(self.beta1, "optimizer.beta1"), (self.beta2, "optimizer.beta2")] {
            check(v > 0.0 && v < 1.0, field, format!("must be in (0, 1), got {v}"))?;
        }
        check(
            self.weight_decay >= 0.0 && self.weight_decay.is_finite(),
            "optimizer.weight_decay",
            "must be non-negative",
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct SpecAugmentConfig {
    pub freq_masks: usize,
    pub freq_width_max: usize,
    pub time_masks: usize,
    pub time_width_max: usize,
}

impl Default for SpecAugmentConfig {
    fn default() -> Self {
        SpecAugmentConfig {
            freq_masks: 2,
            freq_width_max: 2,
            time_masks: 2,
            time_width_max: 4,
        }
    }
}

impl SpecAugmentConfig {
    pub fn disabled() -> Self {
        SpecAugmentConfig {
            freq_masks: 0,
            freq_width_max: 0,
            time_masks: 0,
            time_width_max: 0,
        }
    }
}

/// Synthetic sequence-labelling task used in place of speech data.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct TaskConfig {
    /// Frames each symbol's feature pattern spans.
    pub frames_per_symbol: usize,
    pub noise_std: f64,
    pub min_symbols: usize,
    pub max_symbols: usize,
    pub codebook_seed: u64,
    /// Size of the held-out evaluation set.
    pub eval_size: usize,
    pub eval_seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            frames_per_symbol: 32,
            noise_std: 0.5,
            min_symbols: 2,
            max_symbols: 5,
            codebook_seed: 1234,
            eval_size: 64,
            eval_seed: 999,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        check(
            self.frames_per_symbol >= 1,
            "task.frames_per_symbol",
            "must be at least 1",
        )?;
        check(
            self.noise_std >= 0.0 && self.noise_std.is_finite(),
            "task.noise_std",
            "must be non-negative",
        )?;
        check(self.min_symbols >= 1, "task.min_symbols", "must be at least 1")?;
        check(
            self.max_symbols >= self.min_symbols,
            "task.max_symbols",
            "must be at least min_symbols",
        )?;
        check(self.eval_size >= 1, "task.eval_size", "must be at least 1")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Held-out evaluation period in steps; 0 disables periodic evaluation.
    pub eval_every: usize,
    pub augment: SpecAugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 8,
            seed: 0,
            eval_every: 100,
            augment: SpecAugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.batch_size >= 1, "train.batch_size", "must be at least 1")?;
        Ok(())
    }
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub task: TaskConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.task.validate()?;
        self.train.validate()?;
        // two output frames per symbol leave room for a blank between repeats
        let need = 2 * self.model.downsampling();
        check(
            self.task.frames_per_symbol >= need,
            "task.frames_per_symbol",
            format!(
                "must be at least {need} (twice the model's {}x downsampling) so every target fits",
                self.model.downsampling()
            ),
        )
    }
}
