//! Training recipe: NovoGrad, warmup plus cosine LR schedule, SpecAugment,
//! the synthetic task and the training loop.

mod augment;
mod novograd;
mod schedule;
mod synthetic;
mod trainer;

pub use augment::{spec_augment, MaskRect};
pub use novograd::{NovoGrad, NOVOGRAD_EPS};
pub use schedule::lr_schedule;
pub use synthetic::{Batch, SyntheticTask, MAX_PATTERN_COSINE};
pub use trainer::{
    eval_batch, evaluate, initial_model, train_loop, train_step, MetricRecord, TrainOutcome,
};
