use alloc::vec;
use alloc::vec::Vec;

use crate::blocks::{BlockConfig, Downsample, DownsampleCache, SeConfig, Tower, TowerCache};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::param::{join, Param, Params};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// How tower outputs are weighted before summation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AggregationMode {
    /// Training: each tower is kept with probability `1 - p` and survivors
    /// are scaled by `1 / (1 - p)`.
    TrainSum,
    /// `w_i = N * delta_i / K`. Keeps the expected sum the towers were
    /// trained to produce; equals the plain sum when nothing is removed.
    #[default]
    InferenceRescaled,
    /// `w_i = delta_i / K`: the mean of the kept towers.
    InferencePaperLiteral,
    /// `w_i = delta_i`: removed towers simply vanish from the sum.
    InferenceUnscaled,
}

impl AggregationMode {
    /// Inference weights for one mega-block.
    pub fn inference_weights<F: Real>(self, active: &[bool]) -> Result<Vec<F>> {
        let n = active.len();
        let k = active.iter().filter(|&&on| on).count();
        if k == 0 {
            return Err(Error::Mask("at least one tower required".into()));
        }
        let on = match self {
            AggregationMode::TrainSum => {
                return Err(Error::config(
                    "mode",
                    "train-time aggregation needs a random stream",
                ))
            }
            AggregationMode::InferenceRescaled => F::lit(n as f64) / F::lit(k as f64),
            AggregationMode::InferencePaperLiteral => F::one() / F::lit(k as f64),
            AggregationMode::InferenceUnscaled => F::one(),
        };
        Ok(active
            .iter()
            .map(|&a| if a { on } else { F::zero() })
            .collect())
    }
}

/// Samples per-tower training weights: `Bernoulli(1 - p) / (1 - p)`. An
/// all-zero draw is rejected and redrawn so some signal always flows.
pub fn sample_tower_weights<F: Real>(n: usize, drop_p: f64, rng: &mut Rng) -> Vec<F> {
    if drop_p == 0.0 {
        return vec![F::one(); n];
    }
    let keep = 1.0 - drop_p;
    let scale = F::lit(1.0 / keep);
    loop {
        let w: Vec<F> = (0..n)
            .map(|_| if rng.bernoulli(keep) { scale } else { F::zero() })
            .collect();
        if w.iter().any(|&v| v != F::zero()) {
            return w;
        }
    }
}

/// `sum_i w_i * outputs_i` in ascending tower order, skipping zero weights.
pub fn weighted_sum<F: Real>(weights: &[F], outputs: &[Option<Tensor<F>>]) -> Result<Tensor<F>> {
    let mut acc: Option<Tensor<F>> = None;
    for (&w, out) in weights.iter().zip(outputs) {
        if w == F::zero() {
            continue;
        }
        let out = out.as_ref().expect("active tower has an output");
        match acc.as_mut() {
            None => {
                let mut t = Tensor::zeros(out.shape());
                t.axpy(w, out)?;
                acc = Some(t);
            }
            Some(a) => a.axpy(w, out)?,
        }
    }
    acc.ok_or_else(|| Error::Mask("at least one tower required".into()))
}

/// Downsampling block followed by parallel towers whose outputs are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct MegaBlock<F = f32> {
    pub downsample: Downsample<F>,
    pub towers: Vec<Tower<F>>,
    pub tower_dropout_p: f64,
}

#[derive(Debug)]
pub struct MegaBlockCache<F> {
    downsample: DownsampleCache<F>,
    /// Weights actually used in this pass.
    pub weights: Vec<F>,
    towers: Vec<Option<TowerCache<F>>>,
}

impl<F: Real> MegaBlock<F> {
    pub fn new(
        in_channels: usize,
        block: &BlockConfig,
        se: &SeConfig,
        num_towers: usize,
        tower_dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let downsample = Downsample::new(
            in_channels,
            block.channels,
            block.kernel_size,
            block.dropout_p,
            rng,
        )?;
        let towers = (0..num_towers)
            .map(|_| Tower::new(block, se, rng))
            .collect::<Result<_>>()?;
        Ok(MegaBlock {
            downsample,
            towers,
            tower_dropout_p,
        })
    }

    pub fn num_towers(&self) -> usize {
        self.towers.len()
    }

    /// Training pass with tower dropout. Each tower gets its own random
    /// stream derived in tower order, so results do not depend on the
    /// executor.
    pub fn forward_train<E: Executor>(
        &mut self,
        x: &Tensor<F>,
        rng: &mut Rng,
        exec: &E,
    ) -> Result<(Tensor<F>, MegaBlockCache<F>)> {
        let (shared, downsample) = self.downsample.forward_train(x, rng)?;
        let weights: Vec<F> = sample_tower_weights(self.towers.len(), self.tower_dropout_p, rng);
        let seeds: Vec<u64> = (0..self.towers.len()).map(|_| rng.next_u64()).collect();
        let results = exec.map_mut(&mut self.towers, |i, tower| {
            if weights[i] == F::zero() {
                return Ok(None);
            }
            tower
                .forward_train(&shared, &mut Rng::new(seeds[i]))
                .map(Some)
        });
        let mut outputs = Vec::with_capacity(results.len());
        let mut caches = Vec::with_capacity(results.len());
        for r in results {
            match r? {
                Some((y, c)) => {
                    outputs.push(Some(y));
                    caches.push(Some(c));
                }
                None => {
                    outputs.push(None);
                    caches.push(None);
                }
            }
        }
        let y = weighted_sum(&weights, &outputs)?;
        Ok((
            y,
            MegaBlockCache {
                downsample,
                weights,
                towers: caches,
            },
        ))
    }

    /// Inference pass over the active towers only.
    pub fn forward_eval<E: Executor>(
        &self,
        x: &Tensor<F>,
        mode: AggregationMode,
        active: &[bool],
        exec: &E,
        bypass_se: bool,
    ) -> Result<Tensor<F>> {
        let outputs = self.tower_outputs(x, active, exec, bypass_se)?;
        let weights = mode.inference_weights::<F>(active)?;
        weighted_sum(&weights, &outputs)
    }

    /// Output of every active tower on the shared downsampled input.
    pub fn tower_outputs<E: Executor>(
        &self,
        x: &Tensor<F>,
        active: &[bool],
        exec: &E,
        bypass_se: bool,
    ) -> Result<Vec<Option<Tensor<F>>>> {
        if active.len() != self.towers.len() {
            return Err(Error::Mask(alloc::format!(
                "{} bits for {} towers",
                active.len(),
                self.towers.len()
            )));
        }
        let shared = self.downsample.forward_eval(x)?;
        exec.map(&self.towers, |i, tower| {
            if active[i] {
                tower.forward_eval(&shared, bypass_se).map(Some)
            } else {
                Ok(None)
            }
        })
        .into_iter()
        .collect()
    }

    pub fn backward<E: Executor>(
        &mut self,
        cache: &MegaBlockCache<F>,
        dy: &Tensor<F>,
        exec: &E,
    ) -> Result<Tensor<F>> {
        let weights = &cache.weights;
        let caches = &cache.towers;
        let grads = exec.map_mut(&mut self.towers, |i, tower| match &caches[i] {
            Some(c) => {
                let mut d = dy.clone();
                d.data_mut().iter_mut().for_each(|v| *v = *v * weights[i]);
                tower.backward(c, &d).map(Some)
            }
            None => Ok(None),
        });
        let mut dshared: Option<Tensor<F>> = None;
        for g in grads {
            if let Some(g) = g? {
                match dshared.as_mut() {
                    None => dshared = Some(g),
                    Some(acc) => acc.axpy(F::one(), &g)?,
                }
            }
        }
        let dshared = dshared.expect("at least one tower was active");
        self.downsample.backward(&cache.downsample, &dshared)
    }
}

impl<F: Real> Params<F> for MegaBlock<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.downsample.visit(&join(prefix, "down"), f);
        for (i, t) in self.towers.iter().enumerate() {
            t.visit(&join(prefix, &alloc::format!("tower{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.downsample.visit_mut(&join(prefix, "down"), f);
        for (i, t) in self.towers.iter_mut().enumerate() {
            t.visit_mut(&join(prefix, &alloc::format!("tower{i}")), f);
        }
    }
}
