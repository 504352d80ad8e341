use crate::error::{Error, Result};
use crate::ops::{self, BatchNormCache, ConvSpec};
use crate::param::{join, Param, Params};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

use super::layers::{apply_mask, BatchNorm, Conv};

/// Per-block settings shared by every block of a tower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub channels: usize,
    pub kernel_size: usize,
    /// Residual blocks per tower.
    pub repeat: usize,
    pub dropout_p: f64,
}

/// Residual separable-conv block.
///
/// Main branch: depthwise conv, pointwise conv, batch norm. Residual branch:
/// pointwise conv and batch norm on the block input. The branches are added
/// before the ReLU, and dropout follows. Shape is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct QuartzBlock<F = f32> {
    pub depthwise: Conv<F>,
    pub pointwise: Conv<F>,
    pub bn: BatchNorm<F>,
    pub res_pointwise: Conv<F>,
    pub res_bn: BatchNorm<F>,
    pub dropout_p: f64,
}

#[derive(Debug, Clone)]
pub struct QuartzBlockCache<F> {
    x: Tensor<F>,
    h: Tensor<F>,
    bn: BatchNormCache<F>,
    res_bn: BatchNormCache<F>,
    z: Tensor<F>,
    mask: Option<Tensor<F>>,
}

impl<F: Real> QuartzBlock<F> {
    pub fn new(cfg: &BlockConfig, rng: &mut Rng) -> Result<Self> {
        let c = cfg.channels;
        Ok(QuartzBlock {
            depthwise: Conv::new(ConvSpec::depthwise(c, cfg.kernel_size, 1), false, rng)?,
            pointwise: Conv::new(ConvSpec::pointwise(c, c), false, rng)?,
            bn: BatchNorm::new(c),
            res_pointwise: Conv::new(ConvSpec::pointwise(c, c), false, rng)?,
            res_bn: BatchNorm::new(c),
            dropout_p: cfg.dropout_p,
        })
    }

    fn check(&self, x: &Tensor<F>) -> Result<()> {
        let c = self.depthwise.spec.in_channels;
        if x.channels() != c {
            let expect = crate::tensor::Shape::new(x.batch(), c, x.time());
            return Err(Error::shape("quartz_block", x.shape(), expect));
        }
        Ok(())
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor<F>,
        rng: &mut Rng,
    ) -> Result<(Tensor<F>, QuartzBlockCache<F>)> {
        self.check(x)?;
        let h = self.depthwise.forward(x)?;
        let (main, bn) = self.bn.forward_train(&self.pointwise.forward(&h)?)?;
        let (res, res_bn) = self.res_bn.forward_train(&self.res_pointwise.forward(x)?)?;
        let z = ops::add(&main, &res)?;
        let (y, mask) = ops::dropout(&ops::relu(&z), self.dropout_p, rng, ops::Mode::Train)?;
        Ok((
            y,
            QuartzBlockCache {
                x: x.clone(),
                h,
                bn,
                res_bn,
                z,
                mask,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check(x)?;
        let main = self.bn.forward_eval(&self.pointwise.forward(&self.depthwise.forward(x)?)?)?;
        let res = self.res_bn.forward_eval(&self.res_pointwise.forward(x)?)?;
        Ok(ops::relu(&ops::add(&main, &res)?))
    }

    pub fn backward(&mut self, cache: &QuartzBlockCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let dz = ops::relu_backward(&cache.z, &apply_mask(dy, cache.mask.as_ref()));
        let dp = self.bn.backward(&cache.bn, &dz);
        let dh = self.pointwise.backward(&cache.h, &dp)?;
        let mut dx = self.depthwise.backward(&cache.x, &dh)?;
        let dr = self.res_bn.backward(&cache.res_bn, &dz);
        let dx_res = self.res_pointwise.backward(&cache.x, &dr)?;
        dx.axpy(F::one(), &dx_res)?;
        Ok(dx)
    }
}

impl<F: Real> Params<F> for QuartzBlock<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        self.depthwise.visit(&join(prefix, "dw"), f);
        self.pointwise.visit(&join(prefix, "pw"), f);
        self.bn.visit(&join(prefix, "bn"), f);
        self.res_pointwise.visit(&join(prefix, "res_pw"), f);
        self.res_bn.visit(&join(prefix, "res_bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        self.depthwise.visit_mut(&join(prefix, "dw"), f);
        self.pointwise.visit_mut(&join(prefix, "pw"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
        self.res_pointwise.visit_mut(&join(prefix, "res_pw"), f);
        self.res_bn.visit_mut(&join(prefix, "res_bn"), f);
    }
}
