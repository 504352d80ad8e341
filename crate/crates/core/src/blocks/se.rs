use crate::error::{Error, Result};
use crate::ops::{self, ConvSpec};
use crate::param::{join, Param, Params};
use crate::rng::Rng;
use crate::tensor::{Real, Shape, Tensor};

use super::layers::Conv;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeConfig {
    pub channels: usize,
    pub reduction: usize,
}

impl SeConfig {
    pub fn bottleneck(&self) -> usize {
        (self.channels / self.reduction.max(1)).max(1)
    }
}

/// Squeeze-and-excitation over time: `x * sigmoid(W2 relu(W1 mean_t(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeModule<F = f32> {
    pub fc1: Conv<F>,
    pub fc2: Conv<F>,
}

#[derive(Debug, Clone)]
pub struct SeCache<F> {
    x: Tensor<F>,
    pooled: Tensor<F>,
    h: Tensor<F>,
    a: Tensor<F>,
    gate: Tensor<F>,
}

impl<F: Real> SeModule<F> {
    pub fn new(cfg: &SeConfig, rng: &mut Rng) -> Result<Self> {
        let b = cfg.bottleneck();
        Ok(SeModule {
            fc1: Conv::new(ConvSpec::pointwise(cfg.channels, b), true, rng)?,
            fc2: Conv::new(ConvSpec::pointwise(b, cfg.channels), true, rng)?,
        })
    }

    fn check(&self, x: &Tensor<F>) -> Result<()> {
        let c = self.fc1.spec.in_channels;
        if x.channels() != c {
            return Err(Error::shape(
                "se_module",
                x.shape(),
                Shape::new(x.batch(), c, x.time()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, SeCache<F>)> {
        self.check(x)?;
        let pooled = ops::global_avg_pool_time(x);
        let h = self.fc1.forward(&pooled)?;
        let a = ops::relu(&h);
        let gate = ops::sigmoid(&self.fc2.forward(&a)?);
        let y = ops::mul_channel(x, &gate)?;
        Ok((
            y,
            SeCache {
                x: x.clone(),
                pooled,
                h,
                a,
                gate,
            },
        ))
    }

    pub fn backward(&mut self, cache: &SeCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let (mut dx, dgate) = ops::mul_channel_backward(&cache.x, &cache.gate, dy);
        let dz = ops::sigmoid_backward(&cache.gate, &dgate);
        let da = self.fc2.backward(&cache.a, &dz)?;
        let dh = ops::relu_backward(&cache.h, &da);
        let dpooled = self.fc1.backward(&cache.pooled, &dh)?;
        dx.axpy(
            F::one(),
            &ops::global_avg_pool_time_backward(cache.x.shape(), &dpooled),
        )?;
        Ok(dx)
    }
}

impl<F: Real> Params<F> for SeModule<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}
