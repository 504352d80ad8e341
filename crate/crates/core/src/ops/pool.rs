use crate::tensor::{Real, Shape, Tensor};

/// Mean over the time axis, `(B, C, T) -> (B, C, 1)`.
pub fn global_avg_pool_time<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let s = x.shape();
    let inv = F::one() / F::lit(s.time as f64);
    Tensor::from_fn(Shape::new(s.batch, s.channels, 1), |b, c, _| {
        x.row(b, c).iter().copied().sum::<F>() * inv
    })
}

/// Spreads `dy / T` back over every frame.
pub fn global_avg_pool_time_backward<F: Real>(input: Shape, dy: &Tensor<F>) -> Tensor<F> {
    let inv = F::one() / F::lit(input.time as f64);
    Tensor::from_fn(input, |b, c, _| dy.get(b, c, 0) * inv)
}
