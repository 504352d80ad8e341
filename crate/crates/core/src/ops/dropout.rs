use alloc::format;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout mask: each entry is `0` with probability `p`, else
/// `1 / (1 - p)`.
pub fn dropout_mask<F: Real>(shape: Shape, p: f64, rng: &mut Rng) -> Tensor<F> {
    let keep = F::lit(1.0 / (1.0 - p));
    Tensor::from_fn(shape, |_, _, _| {
        if rng.bernoulli(p) {
            F::zero()
        } else {
            keep
        }
    })
}

/// Returns the output and, in train mode with `p > 0`, the mask that the
/// backward pass multiplies into the upstream gradient.
pub fn dropout<F: Real>(
    x: &Tensor<F>,
    p: f64,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Tensor<F>, Option<Tensor<F>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config("dropout_p", format!("must be in [0, 1), got {p}")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let mask = dropout_mask::<F>(x.shape(), p, rng);
    let mut y = x.clone();
    for (v, &m) in y.data_mut().iter_mut().zip(mask.data()) {
        *v = *v * m;
    }
    Ok((y, Some(mask)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cases() {
        let x = Tensor::<f32>::full(Shape::new(1, 2, 3), 1.5);
        let mut rng = Rng::new(0);
        assert_eq!(dropout(&x, 0.0, &mut rng, Mode::Train).unwrap().0, x);
        assert_eq!(dropout(&x, 0.5, &mut rng, Mode::Eval).unwrap().0, x);
    }

    #[test]
    fn rejects_p_of_one() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 1));
        assert!(dropout(&x, 1.0, &mut Rng::new(0), Mode::Train).is_err());
    }

    #[test]
    fn keeps_the_mean() {
        let n = 100_000;
        let x = Tensor::<f64>::full(Shape::new(1, 1, n), 1.0);
        let (y, _) = dropout(&x, 0.5, &mut Rng::new(11), Mode::Train).unwrap();
        let mean = y.sum() / n as f64;
        // each sample is 0 or 2, std 1
        let sigma = 1.0 / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");
    }
}
