//! Dense rank-3 tensor laid out as `(batch, channel, time)`, time fastest.
//!
//! Parameters reuse the same type: a conv weight is `(out, in_per_group,
//! kernel)` and a per-channel vector is `(1, channels, 1)`. Gradient buffers
//! live next to the value in [`crate::param::Param`].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar type a tensor can hold. The model runs in `f32`; the gradient
/// checks instantiate everything in `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits the float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub time: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, time: usize) -> Self {
        Shape {
            batch,
            channels,
            time,
        }
    }

    pub const fn len(&self) -> usize {
        self.batch * self.channels * self.time
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.batch, self.channels, self.time]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.batch, self.channels, self.time)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F = f32> {
    shape: Shape,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: Shape, value: F) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<F>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::config(
                "tensor data",
                alloc::format!("{} values for shape {}", data.len(), shape),
            ));
        }
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor from a function of `(b, c, t)`.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..shape.batch {
            for c in 0..shape.channels {
                for t in 0..shape.time {
                    data.push(f(b, c, t));
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape.batch
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn time(&self) -> usize {
        self.shape.time
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, t: usize) -> usize {
        (b * self.shape.channels + c) * self.shape.time + t
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize) -> F {
        self.data[self.index(b, c, t)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, v: F) {
        let i = self.index(b, c, t);
        self.data[i] = v;
    }

    /// The time series of one `(batch, channel)` pair.
    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[F] {
        let start = self.index(b, c, 0);
        &self.data[start..start + self.shape.time]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [F] {
        let start = self.index(b, c, 0);
        let t = self.shape.time;
        &mut self.data[start..start + t]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += alpha * other`, shapes must match.
    pub fn axpy(&mut self, alpha: F, other: &Tensor<F>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("axpy", self.shape, other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn sum_sq(&self) -> F {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies batch items `[start, start + len)`.
    pub fn slice_batch(&self, start: usize, len: usize) -> Self {
        let per = self.shape.channels * self.shape.time;
        Tensor {
            shape: Shape::new(len, self.shape.channels, self.shape.time),
            data: self.data[start * per..(start + len) * per].to_vec(),
        }
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| G::lit(v.as_f64())).collect(),
        }
    }
}
