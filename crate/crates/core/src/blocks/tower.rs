use alloc::vec::Vec;

use crate::error::Result;
use crate::param::{join, Param, Params};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

use super::residual::{BlockConfig, QuartzBlock, QuartzBlockCache};
use super::se::{SeCache, SeConfig, SeModule};

/// One tower: `repeat` residual blocks followed by an SE module.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower<F = f32> {
    pub blocks: Vec<QuartzBlock<F>>,
    pub se: SeModule<F>,
}

#[derive(Debug, Clone)]
pub struct TowerCache<F> {
    blocks: Vec<QuartzBlockCache<F>>,
    se: SeCache<F>,
}

impl<F: Real> Tower<F> {
    pub fn new(block: &BlockConfig, se: &SeConfig, rng: &mut Rng) -> Result<Self> {
        let blocks = (0..block.repeat)
            .map(|_| QuartzBlock::new(block, rng))
            .collect::<Result<_>>()?;
        Ok(Tower {
            blocks,
            se: SeModule::new(se, rng)?,
        })
    }

    pub fn forward_train(&mut self, x: &Tensor<F>, rng: &mut Rng) -> Result<(Tensor<F>, TowerCache<F>)> {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for blk in &mut self.blocks {
            let (y, c) = blk.forward_train(&h, rng)?;
            caches.push(c);
            h = y;
        }
        let (y, se) = self.se.forward(&h)?;
        Ok((y, TowerCache { blocks: caches, se }))
    }

    /// Inference pass. `bypass_se` skips the SE gate, which is the only
    /// non-local operation in the tower.
    pub fn forward_eval(&self, x: &Tensor<F>, bypass_se: bool) -> Result<Tensor<F>> {
        let mut h = x.clone();
        for blk in &self.blocks {
            h = blk.forward_eval(&h)?;
        }
        if bypass_se {
            Ok(h)
        } else {
            Ok(self.se.forward(&h)?.0)
        }
    }

    pub fn backward(&mut self, cache: &TowerCache<F>, dy: &Tensor<F>) -> Result<Tensor<F>> {
        let mut d = self.se.backward(&cache.se, dy)?;
        for (blk, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            d = blk.backward(c, &d)?;
        }
        Ok(d)
    }
}

impl<F: Real> Params<F> for Tower<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &alloc::format!("block{i}")), f);
        }
        self.se.visit(&join(prefix, "se"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &alloc::format!("block{i}")), f);
        }
        self.se.visit_mut(&join(prefix, "se"), f);
    }
}
