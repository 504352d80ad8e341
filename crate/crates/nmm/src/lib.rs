//! File formats, thread pool, reports and the command line for the
//! parallel-tower CTC model in [`nmm_core`].
//!
//! - [`config`]: TOML run configuration with field-level validation.
//! - [`checkpoint`]: the `NMM1` binary checkpoint container.
//! - [`exec`]: a rayon-backed tower executor sized by `NMM_THREADS`.
//! - [`report`]: tab-separated report tables and the architecture report.
//! - [`sweep`]: accuracy against removed towers.
//! - [`bench`]: latency of single- and multi-threaded tower execution.
//! - [`cli`]: argument parsing and the five subcommands.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod exec;
pub mod report;
pub mod sweep;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{load_config, parse_config, ConfigError};
pub use exec::ThreadPool;
