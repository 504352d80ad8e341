use alloc::vec::Vec;
use core::fmt;

use crate::config::{ModelConfig, RunConfig};
use crate::ctc::{corpus_error_rate, ctc_loss, greedy_decode};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::mixture::{AggregationMode, Model, TowerMask};
use crate::param::Params;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::augment::spec_augment;
use super::novograd::NovoGrad;
use super::schedule::lr_schedule;
use super::synthetic::{Batch, SyntheticTask};

/// One line of the metrics log:
/// `step=<int> lr=<float> loss=<float> [ter=<float>]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub ter: Option<f64>,
}

impl fmt::Display for MetricRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step={} lr={} loss={}", self.step, self.lr, self.loss)?;
        if let Some(ter) = self.ter {
            write!(f, " ter={ter}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final model, or the last good one if training diverged.
    pub model: Model<f32>,
    pub records: Vec<MetricRecord>,
    /// Step at which the loss or a gradient became non-finite.
    pub diverged_at: Option<usize>,
}

impl TrainOutcome {
    pub fn final_ter(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.ter)
    }
}

fn output_lengths(cfg: &ModelConfig, lengths: &[usize]) -> Vec<usize> {
    lengths.iter().map(|&l| cfg.output_time(l)).collect()
}

/// Corpus token error rate of greedy decoding on `batch`.
pub fn evaluate<E: Executor>(
    model: &Model<f32>,
    batch: &Batch<f32>,
    mode: AggregationMode,
    mask: Option<&TowerMask>,
    exec: &E,
) -> Result<f64> {
    let log_probs = model.forward(&batch.features, mode, mask, exec)?;
    let lengths = output_lengths(&model.config, &batch.lengths);
    let hyps = greedy_decode(&log_probs, model.config.blank_id(), Some(&lengths));
    let refs: Vec<Vec<usize>> = batch.targets.iter().map(|t| t.labels.clone()).collect();
    Ok(corpus_error_rate(&hyps, &refs))
}

/// The fixed held-out set of a run.
pub fn eval_batch(cfg: &RunConfig) -> Result<Batch<f32>> {
    let task = SyntheticTask::new(&cfg.task, cfg.model.vocab_size, cfg.model.feature_dim)?;
    Ok(task.generate_batch(cfg.task.eval_size, &mut Rng::new(cfg.task.eval_seed)))
}

fn buffers(model: &Model<f32>) -> Vec<Tensor<f32>> {
    let mut out = Vec::new();
    model.visit("", &mut |_, p| {
        if !p.is_trainable() {
            out.push(p.value.clone());
        }
    });
    out
}

fn restore_buffers(model: &mut Model<f32>, saved: Vec<Tensor<f32>>) {
    let mut it = saved.into_iter();
    model.visit_mut("", &mut |_, p| {
        if !p.is_trainable() {
            p.value = it.next().expect("same layout");
        }
    });
}

/// Loss and gradients for one batch; parameter gradients are left in the
/// model. Returns the mean CTC loss.
pub fn train_step<E: Executor>(
    model: &mut Model<f32>,
    batch: &Batch<f32>,
    features: &Tensor<f32>,
    rng: &mut Rng,
    exec: &E,
) -> Result<f64> {
    model.zero_grad();
    let cache = model.forward_train(features, rng, exec)?;
    let lengths = output_lengths(&model.config, &batch.lengths);
    let ctc = ctc_loss(&cache.log_probs, &batch.targets, Some(&lengths))?;
    if !ctc.loss.is_finite() {
        return Ok(ctc.loss);
    }
    model.backward_from_logits(&cache, &ctc.grad, exec)?;
    Ok(ctc.loss)
}

/// Runs the full training recipe: synthetic batches, SpecAugment, tower
/// dropout, CTC, NovoGrad with warmup plus cosine decay. `on_record` sees
/// every metrics record as it is produced.
pub fn train_loop<E: Executor>(
    cfg: &RunConfig,
    exec: &E,
    mut on_record: impl FnMut(&MetricRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let task = SyntheticTask::new(&cfg.task, cfg.model.vocab_size, cfg.model.feature_dim)?;
    let held_out = eval_batch(cfg)?;
    let mut root = Rng::new(cfg.train.seed);
    let mut model = Model::<f32>::new(&cfg.model, &mut root.fork())?;
    let mut data_rng = root.fork();
    let mut aug_rng = root.fork();
    let mut drop_rng = root.fork();
    let mut opt = NovoGrad::new(&cfg.optimizer);
    let total = cfg.train.steps;
    let mut records = Vec::with_capacity(total);

    for step in 1..=total {
        let batch: Batch<f32> = task.generate_batch(cfg.train.batch_size, &mut data_rng);
        let (features, _) = spec_augment(
            &batch.features,
            &cfg.train.augment,
            Some(&batch.lengths),
            &mut aug_rng,
        );
        let saved = buffers(&model);
        let lr = lr_schedule(step, total, &cfg.optimizer);
        let loss = train_step(&mut model, &batch, &features, &mut drop_rng, exec)?;
        let updated = if loss.is_finite() {
            match opt.step(&mut model, lr) {
                Ok(()) => true,
                Err(Error::NonFiniteGradient(_)) => false,
                Err(e) => return Err(e),
            }
        } else {
            false
        };
        if !updated {
            restore_buffers(&mut model, saved);
            return Ok(TrainOutcome {
                model,
                records,
                diverged_at: Some(step),
            });
        }
        let periodic = cfg.train.eval_every > 0 && step % cfg.train.eval_every == 0;
        let ter = if periodic || step == total {
            Some(evaluate(
                &model,
                &held_out,
                AggregationMode::InferenceRescaled,
                None,
                exec,
            )?)
        } else {
            None
        };
        let record = MetricRecord {
            step,
            lr,
            loss,
            ter,
        };
        on_record(&record);
        records.push(record);
    }
    Ok(TrainOutcome {
        model,
        records,
        diverged_at: None,
    })
}

/// Initial model of a run, identical to what [`train_loop`] starts from.
pub fn initial_model(cfg: &RunConfig) -> Result<Model<f32>> {
    cfg.validate()?;
    let mut root = Rng::new(cfg.train.seed);
    Model::new(&cfg.model, &mut root.fork())
}
