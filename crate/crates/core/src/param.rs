//! Named parameter storage shared by the layers, the optimizer and the
//! checkpoint writer.

use alloc::string::String;

use crate::tensor::{Real, Shape, Tensor};

/// A trainable tensor together with its accumulated gradient, or a
/// non-trainable buffer (batch-norm running statistics) when `grad` is
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<F = f32> {
    pub value: Tensor<F>,
    pub grad: Option<Tensor<F>>,
}

impl<F: Real> Param<F> {
    pub fn trainable(value: Tensor<F>) -> Self {
        let grad = Some(Tensor::zeros(value.shape()));
        Param { value, grad }
    }

    pub fn buffer(value: Tensor<F>) -> Self {
        Param { value, grad: None }
    }

    pub fn is_trainable(&self) -> bool {
        self.grad.is_some()
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(F::zero());
        }
    }

    /// Adds `delta` into the gradient. Shapes are guaranteed by the layer
    /// that owns the parameter.
    pub fn accumulate(&mut self, delta: &Tensor<F>) {
        if let Some(g) = self.grad.as_mut() {
            for (a, &d) in g.data_mut().iter_mut().zip(delta.data()) {
                *a = *a + d;
            }
        }
    }

    pub fn grad_norm_sq(&self) -> F {
        self.grad.as_ref().map_or(F::zero(), |g| g.sum_sq())
    }
}

/// Anything that owns parameters. Visiting order is fixed and defines the
/// record order of checkpoints.
pub trait Params<F: Real> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<F>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<F>));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    /// Number of trainable scalars.
    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.is_trainable() {
                n += p.value.len();
            }
        });
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        alloc::format!("{prefix}.{name}")
    }
}
