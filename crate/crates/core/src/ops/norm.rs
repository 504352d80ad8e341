use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Forward state kept by a train-mode batch norm for its backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<F> {
    pub xhat: Tensor<F>,
    pub inv_std: Tensor<F>,
    /// Batch mean per channel, `(1, C, 1)`.
    pub mean: Tensor<F>,
    /// Biased batch variance per channel, `(1, C, 1)`.
    pub var: Tensor<F>,
}

impl<F: Real> BatchNormCache<F> {
    /// Applies the momentum update to running statistics. The running
    /// variance tracks the unbiased estimate.
    pub fn update_running(&self, running_mean: &mut Tensor<F>, running_var: &mut Tensor<F>) {
        let s = self.xhat.shape();
        let n = s.batch * s.time;
        let unbias = if n > 1 {
            F::lit(n as f64 / (n - 1) as f64)
        } else {
            F::one()
        };
        let m = F::lit(BN_MOMENTUM);
        let keep = F::one() - m;
        for c in 0..s.channels {
            let rm = &mut running_mean.data_mut()[c];
            *rm = keep * *rm + m * self.mean.data()[c];
            let rv = &mut running_var.data_mut()[c];
            *rv = keep * *rv + m * self.var.data()[c] * unbias;
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<F> {
    pub dx: Tensor<F>,
    pub dgamma: Tensor<F>,
    pub dbeta: Tensor<F>,
}

fn check(x: Shape, p: Shape) -> Result<()> {
    let expect = Shape::new(1, x.channels, 1);
    if p != expect {
        return Err(Error::shape("batchnorm params", p, expect));
    }
    Ok(())
}

/// Normalises with batch statistics over `(batch, time)` per channel.
pub fn batchnorm_train<F: Real>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
) -> Result<(Tensor<F>, BatchNormCache<F>)> {
    check(x.shape(), gamma.shape())?;
    check(x.shape(), beta.shape())?;
    let s = x.shape();
    let n = F::lit((s.batch * s.time) as f64);
    let eps = F::lit(BN_EPS);
    let cshape = Shape::new(1, s.channels, 1);
    let mut mean = Tensor::zeros(cshape);
    let mut var = Tensor::zeros(cshape);
    let mut inv_std = Tensor::zeros(cshape);
    for c in 0..s.channels {
        let mut sum = F::zero();
        for b in 0..s.batch {
            sum = sum + x.row(b, c).iter().copied().sum::<F>();
        }
        let mu = sum / n;
        let mut sq = F::zero();
        for b in 0..s.batch {
            sq = sq + x.row(b, c).iter().map(|&v| (v - mu) * (v - mu)).sum::<F>();
        }
        let v = sq / n;
        mean.data_mut()[c] = mu;
        var.data_mut()[c] = v;
        inv_std.data_mut()[c] = F::one() / (v + eps).sqrt();
    }
    let xhat = Tensor::from_fn(s, |b, c, t| (x.get(b, c, t) - mean.data()[c]) * inv_std.data()[c]);
    let y = Tensor::from_fn(s, |b, c, t| {
        xhat.get(b, c, t) * gamma.data()[c] + beta.data()[c]
    });
    Ok((
        y,
        BatchNormCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    ))
}

pub fn batchnorm_train_backward<F: Real>(
    cache: &BatchNormCache<F>,
    gamma: &Tensor<F>,
    dy: &Tensor<F>,
) -> BatchNormGrads<F> {
    let s = dy.shape();
    let n = F::lit((s.batch * s.time) as f64);
    let cshape = Shape::new(1, s.channels, 1);
    let mut dgamma = Tensor::zeros(cshape);
    let mut dbeta = Tensor::zeros(cshape);
    let mut dx = Tensor::zeros(s);
    for c in 0..s.channels {
        let (mut sum_dy, mut sum_dy_xhat) = (F::zero(), F::zero());
        for b in 0..s.batch {
            for (&g, &xh) in dy.row(b, c).iter().zip(cache.xhat.row(b, c)) {
                sum_dy = sum_dy + g;
                sum_dy_xhat = sum_dy_xhat + g * xh;
            }
        }
        dgamma.data_mut()[c] = sum_dy_xhat;
        dbeta.data_mut()[c] = sum_dy;
        let k = gamma.data()[c] * cache.inv_std.data()[c] / n;
        for b in 0..s.batch {
            let xh = cache.xhat.row(b, c);
            let g = dy.row(b, c);
            let out = dx.row_mut(b, c);
            for t in 0..s.time {
                out[t] = k * (n * g[t] - sum_dy - xh[t] * sum_dy_xhat);
            }
        }
    }
    BatchNormGrads { dx, dgamma, dbeta }
}

/// Normalises with running statistics.
pub fn batchnorm_eval<F: Real>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    running_mean: &Tensor<F>,
    running_var: &Tensor<F>,
) -> Result<Tensor<F>> {
    for p in [gamma, beta, running_mean, running_var] {
        check(x.shape(), p.shape())?;
    }
    let eps = F::lit(BN_EPS);
    let (scale, shift): (alloc::vec::Vec<F>, alloc::vec::Vec<F>) = (0..x.channels())
        .map(|c| {
            let s = gamma.data()[c] / (running_var.data()[c] + eps).sqrt();
            (s, beta.data()[c] - running_mean.data()[c] * s)
        })
        .unzip();
    Ok(Tensor::from_fn(x.shape(), |b, c, t| {
        x.get(b, c, t) * scale[c] + shift[c]
    }))
}

pub fn batchnorm_eval_backward<F: Real>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    running_mean: &Tensor<F>,
    running_var: &Tensor<F>,
    dy: &Tensor<F>,
) -> BatchNormGrads<F> {
    let s = x.shape();
    let eps = F::lit(BN_EPS);
    let cshape = Shape::new(1, s.channels, 1);
    let mut dgamma = Tensor::zeros(cshape);
    let mut dbeta = Tensor::zeros(cshape);
    let mut dx = Tensor::zeros(s);
    for c in 0..s.channels {
        let inv = F::one() / (running_var.data()[c] + eps).sqrt();
        let mu = running_mean.data()[c];
        for b in 0..s.batch {
            for t in 0..s.time {
                let g = dy.get(b, c, t);
                dgamma.data_mut()[c] = dgamma.data()[c] + g * (x.get(b, c, t) - mu) * inv;
                dbeta.data_mut()[c] = dbeta.data()[c] + g;
                dx.set(b, c, t, g * gamma.data()[c] * inv);
            }
        }
    }
    BatchNormGrads { dx, dgamma, dbeta }
}
