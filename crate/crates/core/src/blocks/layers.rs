use crate::error::Result;
use crate::ops::{self, BatchNormCache, ConvSpec};
use crate::param::{join, Param, Params};
use crate::rng::Rng;
use crate::tensor::{Real, Shape, Tensor};

/// Convolution with its weights. Covers depthwise, pointwise and full convs.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<F = f32> {
    pub spec: ConvSpec,
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
}

impl<F: Real> Conv<F> {
    /// Uniform init with variance `1 / fan_in`.
    pub fn new(spec: ConvSpec, with_bias: bool, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let fan_in = (spec.in_channels / spec.groups) * spec.kernel_size;
        let bound = (3.0 / fan_in as f64).sqrt();
        let weight = Tensor::from_fn(spec.weight_shape(), |_, _, _| {
            F::lit(rng.uniform_in(-bound, bound))
        });
        Ok(Conv {
            spec,
            weight: Param::trainable(weight),
            bias: with_bias
                .then(|| Param::trainable(Tensor::zeros(Shape::new(1, spec.out_channels, 1)))),
        })
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        ops::conv1d(
            x,
            &self.weight.value,
            self.bias.as_ref().map(|b| &b.value),
            &self.spec,
        )
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let g = ops::conv1d_backward(x, &self.weight.value, self.bias.is_some(), &self.spec, dy)?;
        self.weight.accumulate(&g.dweight);
        if let (Some(b), Some(db)) = (self.bias.as_mut(), g.dbias.as_ref()) {
            b.accumulate(db);
        }
        Ok(g.dx)
    }
}

impl<F: Real> Params<F> for Conv<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F = f32> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Param<F>,
    pub running_var: Param<F>,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        let s = Shape::new(1, channels, 1);
        BatchNorm {
            gamma: Param::trainable(Tensor::full(s, F::one())),
            beta: Param::trainable(Tensor::zeros(s)),
            running_mean: Param::buffer(Tensor::zeros(s)),
            running_var: Param::buffer(Tensor::full(s, F::one())),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor<F>) -> Result<(Tensor<F>, BatchNormCache<F>)> {
        let (y, cache) = ops::batchnorm_train(x, &self.gamma.value, &self.beta.value)?;
        cache.update_running(&mut self.running_mean.value, &mut self.running_var.value);
        Ok((y, cache))
    }

    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        ops::batchnorm_eval(
            x,
            &self.gamma.value,
            &self.beta.value,
            &self.running_mean.value,
            &self.running_var.value,
        )
    }

    pub fn backward(&mut self, cache: &BatchNormCache<F>, dy: &Tensor<F>) -> Tensor<F> {
        let g = ops::batchnorm_train_backward(cache, &self.gamma.value, dy);
        self.gamma.accumulate(&g.dgamma);
        self.beta.accumulate(&g.dbeta);
        g.dx
    }
}

impl<F: Real> Params<F> for BatchNorm<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

/// Time-channel separable unit:
/// depthwise conv -> pointwise conv -> batch norm -> ReLU -> dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct SepUnit<F = f32> {
    pub depthwise: Conv<F>,
    pub pointwise: Conv<F>,
    pub bn: BatchNorm<F>,
    pub dropout_p: f64,
}

#[derive(Debug, Clone)]
pub struct SepUnitCache<F> {
    x: Tensor<F>,
    h: Tensor<F>,
    bn: BatchNormCache<F>,
    z: Tensor<F>,
    mask: Option<Tensor<F>>,
}

impl<F: Real> SepUnit<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(SepUnit {
            depthwise: Conv::new(ConvSpec::depthwise(in_channels, kernel_size, stride), false, rng)?,
            pointwise: Conv::new(ConvSpec::pointwise(in_channels, out_channels), false, rng)?,
            bn: BatchNorm::new(out_channels),
            dropout_p,
        })
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor<F>,
        rng: &mut Rng,
    ) -> Result<(Tensor<F>, SepUnitCache<F>)> {
        let h = self.depthwise.forward(x)?;
        let p = self.pointwise.forward(&h)?;
        let (z, bn) = self.bn.forward_train(&p)?;
        let a = ops::relu(&z);
        let (y, mask) = ops::dropout(&a, self.dropout_p, rng, ops::Mode::Train)?;
        Ok((
            y,
            SepUnitCache {
                x: x.clone(),
                h,
                bn,
                z,
                mask,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let h = self.depthwise.forward(x)?;
        let p = self.pointwise.forward(&h)?;
        Ok(ops::relu(&self.bn.forward_eval(&p)?))
    }

    pub fn backward(&mut self, cache: &SepUnitCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let da = apply_mask(dy, cache.mask.as_ref());
        let dz = ops::relu_backward(&cache.z, &da);
        let dp = self.bn.backward(&cache.bn, &dz);
        let dh = self.pointwise.backward(&cache.h, &dp)?;
        self.depthwise.backward(&cache.x, &dh)
    }
}

impl<F: Real> Params<F> for SepUnit<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.depthwise.visit(&join(prefix, "dw"), f);
        self.pointwise.visit(&join(prefix, "pw"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.depthwise.visit_mut(&join(prefix, "dw"), f);
        self.pointwise.visit_mut(&join(prefix, "pw"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}

pub(crate) fn apply_mask<F: Real>(dy: &Tensor<F>, mask: Option<&Tensor<F>>) -> Tensor<F> {
    match mask {
        None => dy.clone(),
        Some(m) => {
            let mut out = dy.clone();
            for (o, &k) in out.data_mut().iter_mut().zip(m.data()) {
                *o = *o * k;
            }
            out
        }
    }
}
