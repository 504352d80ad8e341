use alloc::vec::Vec;

use crate::blocks::{BlockConfig, Epilogue, EpilogueCache, Prologue, SeConfig, SepUnitCache};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::ops;
use crate::param::{join, Param, Params};
use crate::rng::Rng;
use crate::tensor::{Real, Shape, Tensor};

use super::cost;
use super::mask::TowerMask;
use super::megablock::{AggregationMode, MegaBlock, MegaBlockCache};

/// The full network: prologue, mega-blocks, epilogue.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F = f32> {
    pub config: ModelConfig,
    pub prologue: Prologue<F>,
    pub megablocks: Vec<MegaBlock<F>>,
    pub epilogue: Epilogue<F>,
}

#[derive(Debug)]
pub struct ModelCache<F> {
    prologue: SepUnitCache<F>,
    pub megablocks: Vec<MegaBlockCache<F>>,
    epilogue: EpilogueCache<F>,
    /// Log-probabilities produced by the pass.
    pub log_probs: Tensor<F>,
}

impl<F: Real> Model<F> {
    pub fn new(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let prologue = Prologue::new(config.feature_dim, c, config.kernel_size, config.dropout_p, rng)?;
        let block = BlockConfig {
            channels: c,
            kernel_size: config.kernel_size,
            repeat: config.blocks_per_tower,
            dropout_p: config.dropout_p,
        };
        let se = SeConfig {
            channels: c,
            reduction: config.se_reduction,
        };
        let megablocks = config
            .towers
            .iter()
            .map(|&n| MegaBlock::new(c, &block, &se, n, config.tower_dropout_p, rng))
            .collect::<Result<_>>()?;
        let epilogue = Epilogue::new(
            c,
            config.epilogue_kernel(),
            config.num_classes(),
            config.dropout_p,
            rng,
        )?;
        Ok(Model {
            config: config.clone(),
            prologue,
            megablocks,
            epilogue,
        })
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        if x.channels() != self.config.feature_dim || x.batch() == 0 || x.time() == 0 {
            let expect = Shape::new(x.batch().max(1), self.config.feature_dim, x.time().max(1));
            return Err(Error::shape("model input", x.shape(), expect));
        }
        Ok(())
    }

    fn check_mask(&self, mask: &TowerMask) -> Result<()> {
        if !mask.matches(&self.config.towers) {
            return Err(Error::Mask(alloc::format!(
                "mask {mask} does not fit towers {:?}",
                self.config.towers
            )));
        }
        Ok(())
    }

    /// Training pass with tower dropout and element-wise dropout. Batch-norm
    /// running statistics are updated.
    pub fn forward_train<E: Executor>(
        &mut self,
        x: &Tensor<F>,
        rng: &mut Rng,
        exec: &E,
    ) -> Result<ModelCache<F>> {
        self.check_input(x)?;
        let (mut h, prologue) = self.prologue.unit.forward_train(x, rng)?;
        let mut caches = Vec::with_capacity(self.megablocks.len());
        for mb in &mut self.megablocks {
            let (y, c) = mb.forward_train(&h, rng, exec)?;
            caches.push(c);
            h = y;
        }
        let (logits, epilogue) = self.epilogue.forward_train(&h, rng)?;
        Ok(ModelCache {
            prologue,
            megablocks: caches,
            epilogue,
            log_probs: ops::log_softmax(&logits),
        })
    }

    /// Backward pass from the gradient with respect to the pre-softmax
    /// logits. Accumulates into parameter gradients and returns the input
    /// gradient.
    pub fn backward_from_logits<E: Executor>(
        &mut self,
        cache: &ModelCache<F>,
        dlogits: &Tensor<F>,
        exec: &E,
    ) -> Result<Tensor<F>> {
        let mut d = self.epilogue.backward(&cache.epilogue, dlogits)?;
        for (mb, c) in self.megablocks.iter_mut().zip(&cache.megablocks).rev() {
            d = mb.backward(c, &d, exec)?;
        }
        self.prologue.unit.backward(&cache.prologue, &d)
    }

    /// Inference log-probabilities `(B, V + 1, T')`.
    pub fn forward<E: Executor>(
        &self,
        x: &Tensor<F>,
        mode: AggregationMode,
        mask: Option<&TowerMask>,
        exec: &E,
    ) -> Result<Tensor<F>> {
        Ok(ops::log_softmax(&self.logits(x, mode, mask, exec, false)?))
    }

    /// Inference pre-softmax logits. `bypass_se` drops every SE gate, which
    /// makes the network strictly local in time.
    pub fn logits<E: Executor>(
        &self,
        x: &Tensor<F>,
        mode: AggregationMode,
        mask: Option<&TowerMask>,
        exec: &E,
        bypass_se: bool,
    ) -> Result<Tensor<F>> {
        self.check_input(x)?;
        let full;
        let mask = match mask {
            Some(m) => {
                self.check_mask(m)?;
                m
            }
            None => {
                full = TowerMask::full(&self.config.towers);
                &full
            }
        };
        let mut h = self.prologue.unit.forward_eval(x)?;
        for (i, mb) in self.megablocks.iter().enumerate() {
            h = mb.forward_eval(&h, mode, mask.block(i), exec, bypass_se)?;
        }
        self.epilogue.forward_eval(&h)
    }

    /// L2 norm of each tower's output in every mega-block, on the full
    /// (unmasked, rescaled) model.
    pub fn tower_output_norms<E: Executor>(&self, x: &Tensor<F>, exec: &E) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let full = TowerMask::full(&self.config.towers);
        let mut h = self.prologue.unit.forward_eval(x)?;
        let mut norms = Vec::with_capacity(self.megablocks.len());
        for (i, mb) in self.megablocks.iter().enumerate() {
            let outs = mb.tower_outputs(&h, full.block(i), exec, false)?;
            norms.push(
                outs.iter()
                    .map(|o| o.as_ref().map_or(0.0, |t| libm::sqrt(t.sum_sq().as_f64())))
                    .collect(),
            );
            h = mb.forward_eval(&h, AggregationMode::InferenceRescaled, full.block(i), exec, false)?;
        }
        Ok(norms)
    }

    /// A reconfigured view that evaluates only the towers kept by `mask`.
    pub fn apply_mask(&self, mask: TowerMask) -> Result<MaskedModel<'_, F>> {
        self.check_mask(&mask)?;
        Ok(MaskedModel { model: self, mask })
    }

    pub fn param_count(&self) -> usize {
        self.num_trainable()
    }

    pub fn flop_count(&self, time: usize, mask: Option<&TowerMask>) -> u64 {
        cost::flop_count(&self.config, time, mask)
    }

    /// Converts every parameter to another float type.
    pub fn cast<G: Real>(&self) -> Model<G> {
        let mut rng = Rng::new(0);
        let mut out = Model::<G>::new(&self.config, &mut rng).expect("config already validated");
        let mut values = Vec::new();
        self.visit("", &mut |_, p| values.push(p.value.cast::<G>()));
        let mut it = values.into_iter();
        out.visit_mut("", &mut |_, p| {
            p.value = it.next().expect("same layout");
        });
        out
    }
}

impl<F: Real> Params<F> for Model<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.prologue.visit(&join(prefix, "prologue"), f);
        for (i, mb) in self.megablocks.iter().enumerate() {
            mb.visit(&join(prefix, &alloc::format!("mb{}", i + 1)), f);
        }
        self.epilogue.visit(&join(prefix, "epilogue"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.prologue.visit_mut(&join(prefix, "prologue"), f);
        for (i, mb) in self.megablocks.iter_mut().enumerate() {
            mb.visit_mut(&join(prefix, &alloc::format!("mb{}", i + 1)), f);
        }
        self.epilogue.visit_mut(&join(prefix, "epilogue"), f);
    }
}

/// Read-only view of a model with some towers removed. Removed towers are
/// never evaluated and the stored parameters are untouched.
#[derive(Debug, Clone)]
pub struct MaskedModel<'a, F = f32> {
    model: &'a Model<F>,
    mask: TowerMask,
}

impl<F: Real> MaskedModel<'_, F> {
    pub fn mask(&self) -> &TowerMask {
        &self.mask
    }

    pub fn forward<E: Executor>(
        &self,
        x: &Tensor<F>,
        mode: AggregationMode,
        exec: &E,
    ) -> Result<Tensor<F>> {
        self.model.forward(x, mode, Some(&self.mask), exec)
    }

    /// Parameters that take part in the forward pass.
    pub fn param_count(&self) -> usize {
        cost::param_count(&self.model.config, Some(&self.mask))
    }

    pub fn flop_count(&self, time: usize) -> u64 {
        cost::flop_count(&self.model.config, time, Some(&self.mask))
    }
}
