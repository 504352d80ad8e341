//! NovoGrad: Adam-like momentum with a second moment kept per layer (per
//! parameter tensor) instead of per element.
//!
//! Per layer with gradient `g` and weights `w`:
//!
//! ```text
//! v <- beta2 * v + (1 - beta2) * |g|^2      (v = |g|^2 on the first step)
//! d  = g / (sqrt(v) + eps) + weight_decay * w
//! m <- beta1 * m + d
//! w <- w - lr * m
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::OptimizerConfig;
use crate::error::{Error, Result};
use crate::param::{Param, Params};
use crate::tensor::{Real, Tensor};

pub const NOVOGRAD_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct LayerState<F> {
    v: Option<f64>,
    m: Tensor<F>,
}

#[derive(Debug, Clone)]
pub struct NovoGrad<F = f32> {
    cfg: OptimizerConfig,
    layers: Vec<LayerState<F>>,
}

impl<F: Real> NovoGrad<F> {
    pub fn new(cfg: &OptimizerConfig) -> Self {
        NovoGrad {
            cfg: cfg.clone(),
            layers: Vec::new(),
        }
    }

    /// Applies one update with learning rate `lr` to every trainable
    /// parameter of `model`. If any gradient is non-finite nothing is
    /// changed and the offending parameter is named in the error.
    pub fn step(&mut self, model: &mut impl Params<F>, lr: f64) -> Result<()> {
        let mut bad: Option<String> = None;
        model.visit("", &mut |name, p| {
            if bad.is_none() && p.grad.as_ref().is_some_and(|g| !g.all_finite()) {
                bad = Some(String::from(name));
            }
        });
        if let Some(name) = bad {
            return Err(Error::NonFiniteGradient(name));
        }

        let mut idx = 0;
        let cfg = &self.cfg;
        let layers = &mut self.layers;
        model.visit_mut("", &mut |_, p| {
            if !p.is_trainable() {
                return;
            }
            if layers.len() == idx {
                layers.push(LayerState {
                    v: None,
                    m: Tensor::zeros(p.shape()),
                });
            }
            update(cfg, &mut layers[idx], p, lr);
            idx += 1;
        });
        Ok(())
    }
}

fn update<F: Real>(cfg: &OptimizerConfig, state: &mut LayerState<F>, p: &mut Param<F>, lr: f64) {
    let grad = p.grad.as_ref().expect("trainable");
    let norm_sq: f64 = grad.data().iter().map(|&g| g.as_f64() * g.as_f64()).sum();
    let v = match state.v {
        None => norm_sq,
        Some(v) => cfg.beta2 * v + (1.0 - cfg.beta2) * norm_sq,
    };
    state.v = Some(v);
    let denom = v.sqrt() + NOVOGRAD_EPS;
    let values = p.value.data_mut();
    for ((w, &g), m) in values.iter_mut().zip(grad.data()).zip(state.m.data_mut()) {
        let d = g.as_f64() / denom + cfg.weight_decay * w.as_f64();
        let m_new = cfg.beta1 * m.as_f64() + d;
        *m = F::lit(m_new);
        *w = F::lit(w.as_f64() - lr * m_new);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::join;
    use crate::tensor::Shape;

    struct Scalar(Param<f32>);

    impl Params<f32> for Scalar {
        fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<f32>)) {
            f(&join(prefix, "w"), &self.0);
        }
        fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<f32>)) {
            f(&join(prefix, "w"), &mut self.0);
        }
    }

    fn scalar(w: f32, g: f32) -> Scalar {
        let mut p = Param::trainable(Tensor::full(Shape::new(1, 1, 1), w));
        p.grad = Some(Tensor::full(Shape::new(1, 1, 1), g));
        Scalar(p)
    }

    fn cfg() -> OptimizerConfig {
        OptimizerConfig {
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn first_step_hand_trace() {
        let mut s = scalar(1.0, 1.0);
        let mut opt = NovoGrad::new(&cfg());
        opt.step(&mut s, 0.1).unwrap();
        // v = 1, d = 1 / (1 + 1e-8), m = d, w = 1 - 0.1 d
        let expect = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((s.0.value.data()[0] as f64 - expect).abs() < 1e-7);
        assert!((s.0.value.data()[0] - 0.9).abs() < 1e-6);
        // second step: v = 0.25 + 0.75 = 1, m = 0.8 m + d
        opt.step(&mut s, 0.1).unwrap();
        let d = 1.0 / (1.0 + 1e-8);
        let expect = expect - 0.1 * (0.8 * d + d);
        assert!((s.0.value.data()[0] as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut s = scalar(0.7, 0.0);
        let mut opt = NovoGrad::new(&cfg());
        for _ in 0..3 {
            opt.step(&mut s, 0.1).unwrap();
        }
        assert_eq!(s.0.value.data()[0], 0.7);
    }

    #[test]
    fn weight_decay_shrinks_weights() {
        let mut s = scalar(1.0, 0.0);
        let mut opt = NovoGrad::new(&OptimizerConfig::default());
        opt.step(&mut s, 0.1).unwrap();
        assert!((s.0.value.data()[0] - (1.0 - 0.1 * 1e-3)).abs() < 1e-7);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut s = scalar(1.0, f32::NAN);
        let mut opt = NovoGrad::new(&cfg());
        let err = opt.step(&mut s, 0.1).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient("w".into()));
        assert_eq!(s.0.value.data()[0], 1.0);
    }
}
