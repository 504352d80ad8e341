use crate::tensor::{Real, Tensor};

/// Log-softmax over the channel axis for every `(batch, time)` frame.
pub fn log_softmax<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let (b_n, c_n, t_n) = (x.batch(), x.channels(), x.time());
    let mut y = x.clone();
    for b in 0..b_n {
        for t in 0..t_n {
            let mut max = F::neg_infinity();
            for c in 0..c_n {
                max = max.max(x.get(b, c, t));
            }
            let mut denom = F::zero();
            for c in 0..c_n {
                denom = denom + (x.get(b, c, t) - max).exp();
            }
            let lse = max + denom.ln();
            for c in 0..c_n {
                y.set(b, c, t, x.get(b, c, t) - lse);
            }
        }
    }
    y
}

pub fn softmax_from_log<F: Real>(log_probs: &Tensor<F>) -> Tensor<F> {
    log_probs.map(|v| v.exp())
}

/// Backward of [`log_softmax`] given its output: `dx = dy - softmax * sum_c(dy)`.
pub fn log_softmax_backward<F: Real>(y: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
    let (b_n, c_n, t_n) = (y.batch(), y.channels(), y.time());
    let mut dx = dy.clone();
    for b in 0..b_n {
        for t in 0..t_n {
            let mut total = F::zero();
            for c in 0..c_n {
                total = total + dy.get(b, c, t);
            }
            for c in 0..c_n {
                let v = dy.get(b, c, t) - y.get(b, c, t).exp() * total;
                dx.set(b, c, t, v);
            }
        }
    }
    dx
}
