use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

pub fn relu<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| v.max(F::zero()))
}

/// Subgradient at exactly zero is zero.
pub fn relu_backward<F: Real>(x: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= F::zero() {
            *d = F::zero();
        }
    }
    dx
}

pub fn sigmoid<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| {
        // split on sign so exp never overflows
        if v >= F::zero() {
            F::one() / (F::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (F::one() + e)
        }
    })
}

/// Backward of [`sigmoid`] in terms of its output `y`.
pub fn sigmoid_backward<F: Real>(y: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
    let mut dx = dy.clone();
    for (d, &s) in dx.data_mut().iter_mut().zip(y.data()) {
        *d = *d * s * (F::one() - s);
    }
    dx
}

fn broadcast_ok(x: Shape, y: Shape) -> bool {
    x == y || (y.batch == x.batch && y.channels == x.channels && y.time == 1)
}

/// `x + y`, where `y` is either the same shape or `(B, C, 1)` and is then
/// broadcast over time.
pub fn add<F: Real>(x: &Tensor<F>, y: &Tensor<F>) -> Result<Tensor<F>> {
    if !broadcast_ok(x.shape(), y.shape()) {
        return Err(Error::shape("add", x.shape(), y.shape()));
    }
    let mut out = x.clone();
    if x.shape() == y.shape() {
        for (o, &v) in out.data_mut().iter_mut().zip(y.data()) {
            *o = *o + v;
        }
    } else {
        for b in 0..x.batch() {
            for c in 0..x.channels() {
                let v = y.get(b, c, 0);
                out.row_mut(b, c).iter_mut().for_each(|o| *o = *o + v);
            }
        }
    }
    Ok(out)
}

/// Gradient of [`add`] with respect to a broadcast `y` of shape `(B, C, 1)`:
/// `dy` summed over time. The gradient with respect to `x` is `dy` itself.
pub fn add_backward_broadcast<F: Real>(dy: &Tensor<F>) -> Tensor<F> {
    let s = dy.shape();
    Tensor::from_fn(Shape::new(s.batch, s.channels, 1), |b, c, _| {
        dy.row(b, c).iter().copied().sum()
    })
}

pub fn scale<F: Real>(x: &Tensor<F>, s: F) -> Tensor<F> {
    x.map(|v| v * s)
}

/// `x` scaled per `(batch, channel)` by `s` of shape `(B, C, 1)`.
pub fn mul_channel<F: Real>(x: &Tensor<F>, s: &Tensor<F>) -> Result<Tensor<F>> {
    let expect = Shape::new(x.batch(), x.channels(), 1);
    if s.shape() != expect {
        return Err(Error::shape("mul_channel", s.shape(), expect));
    }
    let mut out = x.clone();
    for b in 0..x.batch() {
        for c in 0..x.channels() {
            let g = s.get(b, c, 0);
            out.row_mut(b, c).iter_mut().for_each(|o| *o = *o * g);
        }
    }
    Ok(out)
}

/// Returns `(dx, ds)` for [`mul_channel`].
pub fn mul_channel_backward<F: Real>(
    x: &Tensor<F>,
    s: &Tensor<F>,
    dy: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>) {
    let mut dx = dy.clone();
    let mut ds = Tensor::zeros(s.shape());
    for b in 0..x.batch() {
        for c in 0..x.channels() {
            let g = s.get(b, c, 0);
            let dot: F = x.row(b, c).iter().zip(dy.row(b, c)).map(|(&a, &d)| a * d).sum();
            ds.set(b, c, 0, dot);
            dx.row_mut(b, c).iter_mut().for_each(|d| *d = *d * g);
        }
    }
    (dx, ds)
}
