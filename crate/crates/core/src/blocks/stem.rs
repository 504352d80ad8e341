//! Prologue, epilogue and the downsampling block that opens every
//! mega-block.

use crate::error::Result;
use crate::ops::{self, ConvSpec};
use crate::param::{join, Param, Params};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

use super::layers::{Conv, SepUnit, SepUnitCache};

/// Two separable units; the second has stride 2. The first one maps the
/// incoming channel count to the mega-block's.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsample<F = f32> {
    pub first: SepUnit<F>,
    pub second: SepUnit<F>,
}

#[derive(Debug, Clone)]
pub struct DownsampleCache<F> {
    first: SepUnitCache<F>,
    second: SepUnitCache<F>,
}

impl<F: Real> Downsample<F> {
    pub fn new(
        in_channels: usize,
        channels: usize,
        kernel_size: usize,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Downsample {
            first: SepUnit::new(in_channels, channels, kernel_size, 1, dropout_p, rng)?,
            second: SepUnit::new(channels, channels, kernel_size, 2, dropout_p, rng)?,
        })
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor<F>,
        rng: &mut Rng,
    ) -> Result<(Tensor<F>, DownsampleCache<F>)> {
        let (h, first) = self.first.forward_train(x, rng)?;
        let (y, second) = self.second.forward_train(&h, rng)?;
        Ok((y, DownsampleCache { first, second }))
    }

    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.second.forward_eval(&self.first.forward_eval(x)?)
    }

    pub fn backward(&mut self, cache: &DownsampleCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let dh = self.second.backward(&cache.second, dy)?;
        self.first.backward(&cache.first, &dh)
    }
}

impl<F: Real> Params<F> for Downsample<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.first.visit(&join(prefix, "unit0"), f);
        self.second.visit(&join(prefix, "unit1"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.first.visit_mut(&join(prefix, "unit0"), f);
        self.second.visit_mut(&join(prefix, "unit1"), f);
    }
}

/// One stride-2 separable unit from the feature dimension to the model
/// width.
#[derive(Debug, Clone, PartialEq)]
pub struct Prologue<F = f32> {
    pub unit: SepUnit<F>,
}

impl<F: Real> Prologue<F> {
    pub fn new(
        feature_dim: usize,
        channels: usize,
        kernel_size: usize,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Prologue {
            unit: SepUnit::new(feature_dim, channels, kernel_size, 2, dropout_p, rng)?,
        })
    }
}

impl<F: Real> Params<F> for Prologue<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.unit.visit(&join(prefix, "unit"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.unit.visit_mut(&join(prefix, "unit"), f);
    }
}

/// A wide-kernel separable unit followed by a biased pointwise projection
/// to the output classes. The final log-softmax is applied by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Epilogue<F = f32> {
    pub unit: SepUnit<F>,
    pub projection: Conv<F>,
}

#[derive(Debug, Clone)]
pub struct EpilogueCache<F> {
    unit: SepUnitCache<F>,
    h: Tensor<F>,
}

impl<F: Real> Epilogue<F> {
    pub fn new(
        channels: usize,
        kernel_size: usize,
        num_classes: usize,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Epilogue {
            unit: SepUnit::new(channels, channels, kernel_size, 1, dropout_p, rng)?,
            projection: Conv::new(ConvSpec::pointwise(channels, num_classes), true, rng)?,
        })
    }

    /// Returns pre-softmax logits.
    pub fn forward_train(
        &mut self,
        x: &Tensor<F>,
        rng: &mut Rng,
    ) -> Result<(Tensor<F>, EpilogueCache<F>)> {
        let (h, unit) = self.unit.forward_train(x, rng)?;
        let logits = self.projection.forward(&h)?;
        Ok((logits, EpilogueCache { unit, h }))
    }

    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.projection.forward(&self.unit.forward_eval(x)?)
    }

    pub fn backward(&mut self, cache: &EpilogueCache<F>, dlogits: &Tensor<F>) -> Result<Tensor<F>> {
        let dh = self.projection.backward(&cache.h, dlogits)?;
        self.unit.backward(&cache.unit, &dh)
    }
}

impl<F: Real> Params<F> for Epilogue<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.unit.visit(&join(prefix, "unit"), f);
        self.projection.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.unit.visit_mut(&join(prefix, "unit"), f);
        self.projection.visit_mut(&join(prefix, "proj"), f);
    }
}

/// Convenience used by tests and the model: logits to log-probabilities.
pub fn to_log_probs<F: Real>(logits: &Tensor<F>) -> Tensor<F> {
    ops::log_softmax(logits)
}
