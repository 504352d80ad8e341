//! Core of a parallel-tower convolutional acoustic model trained with CTC.
//!
//! The network is a prologue, a stack of mega-blocks and an epilogue. Every
//! mega-block downsamples its input by two and feeds the result to several
//! independent towers of residual time-channel separable convolutions. Tower
//! outputs are summed. Towers can be dropped at random while training and
//! removed outright at inference, with the summation weights rescaled so the
//! model keeps working without retraining.
//!
//! This crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the companion `nmm` crate. Parallel
//! tower execution is abstracted behind [`exec::Executor`]; the crate ships a
//! sequential implementation only.
//!
//! Module map:
//!
//! - [`tensor`] and [`ops`]: a dense `(batch, channel, time)` tensor and the
//!   primitive ops with their analytic backward passes.
//! - [`blocks`]: separable-conv units, residual blocks, SE, downsampling,
//!   prologue, epilogue, and receptive-field analysis.
//! - [`mixture`]: mega-blocks, tower dropout, tower masks and the full model.
//! - [`ctc`]: CTC loss, a brute-force oracle, greedy decoding and token
//!   error rate.
//! - [`train`]: NovoGrad, the LR schedule, SpecAugment, the synthetic task and
//!   the training loop.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod blocks;
pub mod config;
pub mod ctc;
mod error;
pub mod exec;
pub mod mixture;
pub mod ops;
pub mod param;
pub mod rng;
pub mod tensor;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use config::{ModelConfig, OptimizerConfig, RunConfig, SpecAugmentConfig, TaskConfig, TrainConfig};
pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use mixture::{AggregationMode, Model, TowerMask};
pub use rng::Rng;
pub use tensor::{Real, Tensor};
