use alloc::format;

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Geometry of a 1D convolution with symmetric "same" zero padding of
/// `(kernel_size - 1) / 2` frames on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn depthwise(channels: usize, kernel_size: usize, stride: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel_size,
            stride,
            groups: channels,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_size: 1,
            stride: 1,
            groups: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::config("conv.channels", "must be at least 1"));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::config(
                "conv.kernel_size",
                format!("must be odd and positive, got {}", self.kernel_size),
            ));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::config(
                "conv.stride",
                format!("must be 1 or 2, got {}", self.stride),
            ));
        }
        if self.groups == self.in_channels && self.groups > 1 {
            if self.out_channels != self.in_channels {
                return Err(Error::config(
                    "conv.out_channels",
                    "depthwise conv must keep the channel count",
                ));
            }
        } else if self.groups != 1 {
            return Err(Error::config(
                "conv.groups",
                format!("must be 1 or in_channels ({}), got {}", self.in_channels, self.groups),
            ));
        }
        Ok(())
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups > 1
    }

    pub fn pad(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    pub fn out_time(&self, time: usize) -> usize {
        time.div_ceil(self.stride)
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel_size,
        )
    }

    pub fn num_weights(&self) -> usize {
        self.weight_shape().len()
    }

    /// Multiply-accumulates for an input of `time` frames, per batch item.
    pub fn macs(&self, time: usize) -> u64 {
        (self.out_time(time) * self.num_weights()) as u64
    }

    fn check(&self, x: Shape, w: Shape, bias: Option<Shape>) -> Result<()> {
        self.validate()?;
        let expect_x = Shape::new(x.batch, self.in_channels, x.time);
        if x != expect_x || x.batch == 0 || x.time == 0 {
            return Err(Error::shape("conv1d input", x, expect_x));
        }
        if w != self.weight_shape() {
            return Err(Error::shape("conv1d weight", w, self.weight_shape()));
        }
        if let Some(b) = bias {
            let expect = Shape::new(1, self.out_channels, 1);
            if b != expect {
                return Err(Error::shape("conv1d bias", b, expect));
            }
        }
        Ok(())
    }
}

/// 1D convolution. `weight` is `(out, in / groups, kernel)`, `bias` is
/// `(1, out, 1)`.
pub fn conv1d<F: Real>(
    x: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    spec.check(x.shape(), weight.shape(), bias.map(|b| b.shape()))?;
    let (batch, t_in) = (x.batch(), x.time());
    let t_out = spec.out_time(t_in);
    let mut y = Tensor::zeros(Shape::new(batch, spec.out_channels, t_out));
    let w = weight.data();
    let k = spec.kernel_size;

    if spec.is_depthwise() {
        for b in 0..batch {
            for c in 0..spec.in_channels {
                let taps = &w[c * k..(c + 1) * k];
                let xr = x.row(b, c);
                let yr = y.row_mut(b, c);
                depthwise_row(xr, taps, spec.stride, spec.pad(), yr);
            }
        }
    } else {
        for b in 0..batch {
            for o in 0..spec.out_channels {
                for i in 0..spec.in_channels {
                    let taps = &w[(o * spec.in_channels + i) * k..][..k];
                    let xr = x.row(b, i);
                    let yr = y.row_mut(b, o);
                    if k == 1 && spec.stride == 1 {
                        let wv = taps[0];
                        for (yv, &xv) in yr.iter_mut().zip(xr) {
                            *yv = *yv + wv * xv;
                        }
                    } else {
                        depthwise_row(xr, taps, spec.stride, spec.pad(), yr);
                    }
                }
            }
        }
    }

    if let Some(bias) = bias {
        for b in 0..batch {
            for o in 0..spec.out_channels {
                let bv = bias.data()[o];
                y.row_mut(b, o).iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }
    Ok(y)
}

/// Accumulates one input row convolved with `taps` into `out`.
#[inline]
fn depthwise_row<F: Real>(x: &[F], taps: &[F], stride: usize, pad: usize, out: &mut [F]) {
    let t_in = x.len() as isize;
    for (m, &wv) in taps.iter().enumerate() {
        let offset = m as isize - pad as isize;
        if stride == 1 {
            // out[j] += w * x[j + offset] for j + offset in [0, t_in)
            let lo = (-offset).max(0) as usize;
            let hi = ((t_in - offset).min(out.len() as isize)).max(lo as isize) as usize;
            if hi <= lo {
                continue;
            }
            let xs = &x[(lo as isize + offset) as usize..(hi as isize + offset) as usize];
            for (o, &xv) in out[lo..hi].iter_mut().zip(xs) {
                *o = *o + wv * xv;
            }
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                let src = (j * stride) as isize + offset;
                if src >= 0 && src < t_in {
                    *o = *o + wv * x[src as usize];
                }
            }
        }
    }
}

/// Dot product with eight fixed lanes so the compiler can vectorize it.
#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut lanes = [F::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] = lanes[l] + x[l] * y[l];
        }
    }
    let mut tail = F::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    lanes.iter().fold(F::zero(), |s, &v| s + v) + tail
}

/// Output frames `j` in `[lo, hi)` whose tap at `offset` reads a real input
/// frame `j * stride + offset`.
fn valid_outputs(offset: isize, stride: usize, t_in: usize, t_out: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let last = t_in as isize - 1 - offset;
    let hi = if last < 0 { 0 } else { last / s + 1 };
    (lo as usize, (hi as usize).min(t_out))
}

#[derive(Debug, Clone)]
pub struct ConvGrads<F> {
    pub dx: Tensor<F>,
    pub dweight: Tensor<F>,
    pub dbias: Option<Tensor<F>>,
}

/// Gradients of [`conv1d`] given the upstream gradient `dy`.
pub fn conv1d_backward<F: Real>(
    x: &Tensor<F>,
    weight: &Tensor<F>,
    with_bias: bool,
    spec: &ConvSpec,
    dy: &Tensor<F>,
) -> Result<ConvGrads<F>> {
    spec.check(x.shape(), weight.shape(), None)?;
    let (batch, t_in) = (x.batch(), x.time());
    let expect_dy = Shape::new(batch, spec.out_channels, spec.out_time(t_in));
    if dy.shape() != expect_dy {
        return Err(Error::shape("conv1d_backward dy", dy.shape(), expect_dy));
    }
    let k = spec.kernel_size;
    let pad = spec.pad() as isize;
    let stride = spec.stride;
    let w = weight.data();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());

    // (input row, output row, tap block offset) for every connected pair
    let for_pairs = |f: &mut dyn FnMut(usize, usize, usize)| {
        if spec.is_depthwise() {
            for c in 0..spec.in_channels {
                f(c, c, c * k);
            }
        } else {
            for o in 0..spec.out_channels {
                for i in 0..spec.in_channels {
                    f(i, o, (o * spec.in_channels + i) * k);
                }
            }
        }
    };

    for b in 0..batch {
        for_pairs(&mut |i, o, base| {
            let xr = x.row(b, i);
            let dyr = dy.row(b, o);
            let taps = &w[base..base + k];
            let dwk = &mut dw.data_mut()[base..base + k];
            let dxr = dx.row_mut(b, i);
            for m in 0..k {
                let offset = m as isize - pad;
                let (lo, hi) = valid_outputs(offset, stride, t_in, dyr.len());
                if lo >= hi {
                    continue;
                }
                let dys = &dyr[lo..hi];
                let first = (lo * stride) as isize + offset;
                let first = first as usize;
                let wv = taps[m];
                let mut acc = F::zero();
                if stride == 1 {
                    acc = dot(dys, &xr[first..first + dys.len()]);
                    for (d, &g) in dxr[first..first + dys.len()].iter_mut().zip(dys) {
                        *d = *d + wv * g;
                    }
                } else {
                    for (n, &g) in dys.iter().enumerate() {
                        let src = first + n * stride;
                        acc = acc + g * xr[src];
                        dxr[src] = dxr[src] + wv * g;
                    }
                }
                dwk[m] = dwk[m] + acc;
            }
        });
    }

    let dbias = with_bias.then(|| {
        let mut db = Tensor::zeros(Shape::new(1, spec.out_channels, 1));
        for b in 0..batch {
            for o in 0..spec.out_channels {
                let s: F = dy.row(b, o).iter().copied().sum();
                db.data_mut()[o] = db.data()[o] + s;
            }
        }
        db
    });

    Ok(ConvGrads {
        dx,
        dweight: dw,
        dbias,
    })
}
