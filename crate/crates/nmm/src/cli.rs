//! Argument parsing and the subcommands. Every command writes its primary
//! report to `out` and diagnostics to `err`; the returned error carries the
//! process exit code.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nmm_core::train::{eval_batch, evaluate, train_loop, Batch, SyntheticTask, TrainOutcome};
use nmm_core::{AggregationMode, Executor, Rng, RunConfig, Sequential, TowerMask};

use crate::bench;
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{load_config, ConfigError};
use crate::exec::{default_threads, ThreadPool};
use crate::report::{self, mode_name, rate, Table};
use crate::sweep::{self, Removal, Target};

#[derive(Debug, Parser)]
#[command(name = "nmm", version, about = "Train, reconfigure and inspect parallel-tower CTC models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the synthetic task; writes a checkpoint and a metrics log.
    Train(TrainArgs),
    /// Token error rate, parameters and FLOPs of a masked model.
    Eval(EvalArgs),
    /// Error rate as towers are removed from the first, last or all mega-blocks.
    Sweep(SweepArgs),
    /// Structure, receptive field, parameters and FLOPs of a configuration.
    Report(ReportArgs),
    /// Forward latency with towers on one thread versus a worker pool.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Rescaled,
    PaperLiteral,
    Unscaled,
}

impl From<Mode> for AggregationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Rescaled => AggregationMode::InferenceRescaled,
            Mode::PaperLiteral => AggregationMode::InferencePaperLiteral,
            Mode::Unscaled => AggregationMode::InferenceUnscaled,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Metrics log; defaults to the checkpoint path with `.log` appended.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run towers on a worker pool (`NMM_THREADS` workers).
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Tower mask such as `mb1=11011,mb2=111111`; omitted mega-blocks keep
    /// every tower.
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Rescaled)]
    pub mode: Mode,
    /// Overrides the held-out set seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "first,last,all")]
    pub targets: Vec<Target>,
    /// Defaults to one less than the smallest tower count.
    #[arg(long)]
    pub max_removed: Option<usize>,
    /// `lowest-l2` or `random:<seed>`.
    #[arg(long, default_value = "lowest-l2")]
    pub removal: Removal,
    /// Overrides the held-out set seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required_unless_present = "checkpoint", conflicts_with = "checkpoint")]
    pub config: Option<PathBuf>,
    /// Report on the configuration stored in a checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Rescaled)]
    pub mode: Mode,
    /// Pool size; defaults to `NMM_THREADS` or the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Seed of the benchmark input batch.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Model(#[from] nmm_core::Error),
    #[error("training diverged at step {0}")]
    Diverged(usize),
    #[error("determinism violation: {0}")]
    Determinism(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Model(nmm_core::Error::Mask(_)) => 2,
            CliError::Diverged(_) => 3,
            CliError::Determinism(_) => 4,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Sweep(a) => sweep(a, out, err),
        Command::Report(a) => report(a, out),
        Command::Bench(a) => bench(a, out),
    }
}

fn parse_mask(text: Option<&str>, towers: &[usize]) -> Result<TowerMask, CliError> {
    match text {
        Some(t) => Ok(TowerMask::parse(t, towers)?),
        None => Ok(TowerMask::full(towers)),
    }
}

fn held_out(cfg: &RunConfig, seed: Option<u64>) -> Result<Batch<f32>, CliError> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.task.eval_seed = s;
    }
    Ok(eval_batch(&cfg)?)
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    let metrics = a.metrics.clone().unwrap_or_else(|| {
        let mut p = a.checkpoint.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    });
    let file = File::create(&metrics).map_err(io_err(&metrics))?;
    let mut log = BufWriter::new(file);
    let mut log_err = None;
    let mut on_record = |r: &nmm_core::train::MetricRecord| {
        if log_err.is_none() {
            if let Err(e) = writeln!(log, "{r}") {
                log_err = Some(e);
            }
        }
    };
    let outcome: TrainOutcome = if a.parallel {
        train_loop(&cfg, &ThreadPool::from_env(), &mut on_record)?
    } else {
        train_loop(&cfg, &Sequential, &mut on_record)?
    };
    if let Some(e) = log_err {
        return Err(io_err(&metrics)(e));
    }
    log.flush().map_err(io_err(&metrics))?;
    if let Some(step) = outcome.diverged_at {
        return Err(CliError::Diverged(step));
    }
    Checkpoint::new(cfg, outcome.model.clone()).save(&a.checkpoint)?;

    let mut t = Table::new(&["checkpoint", "metrics", "steps", "loss", "ter"]);
    let last = outcome.records.last();
    t.push(vec![
        a.checkpoint.display().to_string(),
        metrics.display().to_string(),
        outcome.records.len().to_string(),
        last.map_or("-".into(), |r| format!("{:.6}", r.loss)),
        outcome.final_ter().map_or("-".into(), rate),
    ]);
    write_out(out, &t.render(false))
}

/// Evaluation report for one mask and mode.
pub fn eval_table<E: Executor>(
    ck: &Checkpoint,
    batch: &Batch<f32>,
    mask: &TowerMask,
    mode: AggregationMode,
    exec: &E,
) -> Result<Table, CliError> {
    let view = ck.model.apply_mask(mask.clone())?;
    let ter = evaluate(&ck.model, batch, mode, Some(view.mask()), exec)?;
    let frames = batch.features.time();
    let mut t = Table::new(&["mask", "mode", "params", "flops", "ter"]);
    t.note(format!("items={} frames={frames}", batch.targets.len()));
    t.push(vec![
        mask.to_string(),
        mode_name(mode).into(),
        view.param_count().to_string(),
        view.flop_count(frames).to_string(),
        rate(ter),
    ]);
    Ok(t)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mask = parse_mask(a.mask.as_deref(), &ck.model.config.towers)?;
    let batch = held_out(&ck.config, a.seed)?;
    let t = if a.parallel {
        eval_table(&ck, &batch, &mask, a.mode.into(), &ThreadPool::from_env())?
    } else {
        eval_table(&ck, &batch, &mask, a.mode.into(), &Sequential)?
    };
    write_out(out, &t.render(a.pretty))
}

/// Calibration batch used to rank towers; disjoint seed from the held-out set.
pub fn calibration_batch(cfg: &RunConfig) -> Result<Batch<f32>, CliError> {
    let task = SyntheticTask::new(&cfg.task, cfg.model.vocab_size, cfg.model.feature_dim)?;
    let seed = cfg.task.eval_seed.wrapping_add(1);
    Ok(task.generate_batch(cfg.task.eval_size, &mut Rng::new(seed)))
}

fn sweep(a: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let batch = held_out(&ck.config, a.seed)?;
    let calib = calibration_batch(&ck.config)?;
    let result = if a.parallel {
        let pool = ThreadPool::from_env();
        sweep::sweep(&ck.model, &batch, &calib, &a.targets, a.max_removed, a.removal, &pool)?
    } else {
        sweep::sweep(&ck.model, &batch, &calib, &a.targets, a.max_removed, a.removal, &Sequential)?
    };
    if let Some(req) = result.clamped_from {
        let _ = writeln!(
            err,
            "warning: --max-removed {req} would empty a mega-block; using {}",
            result.max_removed
        );
    }
    write_out(out, &result.table().render(a.pretty))
}

fn report(a: ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match (&a.config, &a.checkpoint) {
        (Some(path), _) => load_config(path)?,
        (None, Some(path)) => Checkpoint::load(path)?.config,
        (None, None) => return Err(CliError::Usage("--config or --checkpoint is required".into())),
    };
    write_out(out, &report::architecture(&cfg.model).render(a.pretty))
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    if a.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mask = parse_mask(a.mask.as_deref(), &ck.model.config.towers)?;
    let batch = held_out(&ck.config, a.seed)?;
    let threads = a.threads.unwrap_or_else(default_threads);
    let pool = ThreadPool::new(threads);
    let mode = a.mode.into();
    if !bench::schedules_agree(&ck.model, &batch.features, mode, Some(&mask), &pool)? {
        return Err(CliError::Determinism(format!(
            "sequential and {threads}-thread outputs differ"
        )));
    }
    let single = bench::time_forward(&ck.model, &batch.features, mode, Some(&mask), &Sequential, a.repeats)?;
    let multi = bench::time_forward(&ck.model, &batch.features, mode, Some(&mask), &pool, a.repeats)?;
    let mut t = bench::table(
        &[("sequential", 1, single), ("pool", pool.threads(), multi)],
        a.repeats,
    );
    t.notes.insert(0, format!("mask={mask} mode={}", mode_name(mode)));
    write_out(out, &t.render(a.pretty))
}
