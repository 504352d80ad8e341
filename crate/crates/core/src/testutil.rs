//! Finite-difference helpers for the unit tests.

use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOL: f64 = 1e-4;

pub fn rand_tensor(shape: Shape, seed: u64) -> Tensor<f64> {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(shape, |_, _, _| rng.uniform_in(-1.0, 1.0))
}

/// Central differences of `f` around `x`, one coordinate at a time.
pub fn numeric_grad(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut g = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

/// Max-norm relative error between two gradients.
pub fn rel_err(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    let diff = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic.max_abs().max(numeric.max_abs()).max(1e-12);
    diff / scale
}

#[track_caller]
pub fn assert_grad_close(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    f: impl FnMut(&Tensor<f64>) -> f64,
) {
    let numeric = numeric_grad(x, f);
    let err = rel_err(analytic, &numeric);
    assert!(
        err < FD_TOL,
        "relative error {err:e}\nanalytic {:?}\nnumeric {:?}",
        analytic.data(),
        numeric.data()
    );
}
