//! Dense rank-4 tensors in (batch, channel, height, width) row-major layout.
//!
//! Every operation here is deterministic: reductions run in a fixed order and
//! no operation depends on thread scheduling. The scalar type is generic so the
//! same code runs in 32-bit (training) and 64-bit (gradient verification).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating point element type of a [`Tensor`].
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    const NAME: &'static str;

    /// `c = alpha * a * b + beta * c` on strided row/column layouts.
    ///
    /// # Safety
    /// Strides and extents must keep every access inside the backing slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Matrix operand: a row-major `rows x cols` buffer, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            transposed: !self.transposed,
            ..self
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out (m x n, row-major) = a * b + beta * out`.
pub(crate) fn gemm<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T]) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "gemm inner dimension");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert_eq!(out.len(), m * n, "gemm output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: extents were checked against the slice lengths above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Dense rank-4 array; see the module docs for layout.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

/// The 32-bit tensor used for storage and training.
pub type Tensor4 = Tensor<f32>;

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.dims)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::shape("Tensor::new", &dims, &[data.len()]));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: [usize; 4], value: T) -> Self {
        Tensor {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.dims)
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for b in 0..dims[0] {
            for c in 0..dims[1] {
                for y in 0..dims[2] {
                    for x in 0..dims[3] {
                        data.push(f(b, c, y, x));
                    }
                }
            }
        }
        Tensor { dims, data }
    }

    /// Converts element type, e.g. to run a 32-bit model in 64-bit.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.dims[2]
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.dims[3]
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }
    #[inline]
    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.plane_len()
    }
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.offset(b, c, y, x);
        self.data[i] = v;
    }

    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Copies sample `b` out as a batch of one.
    pub fn sample_tensor(&self, b: usize) -> Self {
        Tensor {
            dims: [1, self.dims[1], self.dims[2], self.dims[3]],
            data: self.sample(b).to_vec(),
        }
    }

    /// Stacks single- or multi-sample tensors along the batch axis.
    pub fn stack_batch(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("stack_batch"))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::new();
        let mut b = 0;
        for p in parts {
            if p.dims[1..] != [c, h, w] {
                return Err(Error::shape("stack_batch", &first.dims, &p.dims));
            }
            b += p.dims[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            dims: [b, c, h, w],
            data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same(other, op)?;
        Ok(Tensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(op, &self.dims, &other.dims));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Self {
        self.map(|v| v.tanh())
    }

    /// Channel-wise concatenation `[self; other]`.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        let [b, c1, h, w] = self.dims;
        let [b2, c2, h2, w2] = other.dims;
        if (b, h, w) != (b2, h2, w2) {
            return Err(Error::shape("concat_channels", &self.dims, &other.dims));
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        for s in 0..b {
            data.extend_from_slice(self.sample(s));
            data.extend_from_slice(other.sample(s));
        }
        Ok(Tensor {
            dims: [b, c1 + c2, h, w],
            data,
        })
    }

    /// Channels `start..start + len` of every sample.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let [b, c, h, w] = self.dims;
        if start + len > c {
            return Err(Error::InvalidArgument(format!(
                "slice_channels: {start}+{len} exceeds {c} channels"
            )));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(b * len * plane);
        for s in 0..b {
            let base = s * c * plane;
            data.extend_from_slice(&self.data[base + start * plane..base + (start + len) * plane]);
        }
        Ok(Tensor {
            dims: [b, len, h, w],
            data,
        })
    }

    /// Splits into consecutive channel groups of `group` channels each.
    pub fn split_channels(&self, group: usize) -> Result<Vec<Self>> {
        if group == 0 || self.dims[1] % group != 0 {
            return Err(Error::InvalidArgument(format!(
                "split_channels: {} channels not divisible by {group}",
                self.dims[1]
            )));
        }
        (0..self.dims[1] / group)
            .map(|g| self.slice_channels(g * group, group))
            .collect()
    }

    /// Mean over spatial positions; result has dims (B, C, 1, 1).
    pub fn global_avg_pool(&self) -> Result<Self> {
        let [b, c, h, w] = self.dims;
        if h * w == 0 {
            return Err(Error::Empty("global_avg_pool"));
        }
        let plane = h * w;
        let inv = T::one() / T::of(plane as f64);
        let data = self
            .data
            .chunks_exact(plane)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(Tensor {
            dims: [b, c, 1, 1],
            data,
        })
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Backward of an elementwise sigmoid given its output `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad, "sigmoid_backward", |y, g| g * y * (T::one() - y))
}

/// Backward of an elementwise tanh given its output `y`.
pub fn tanh_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad, "tanh_backward", |y, g| g * (T::one() - y * y))
}

/// Backward of [`Tensor::global_avg_pool`]: spreads each pooled gradient uniformly.
pub fn global_avg_pool_backward<T: Scalar>(
    grad: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    let [b, c, gh, gw] = grad.dims();
    if (gh, gw) != (1, 1) {
        return Err(Error::shape(
            "global_avg_pool_backward",
            &grad.dims(),
            &[b, c, 1, 1],
        ));
    }
    if height * width == 0 {
        return Err(Error::Empty("global_avg_pool_backward"));
    }
    let inv = T::one() / T::of((height * width) as f64);
    let plane = height * width;
    let mut data = Vec::with_capacity(b * c * plane);
    for &g in grad.data() {
        data.extend(std::iter::repeat(g * inv).take(plane));
    }
    Tensor::new([b, c, height, width], data)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(scores: &[T]) -> Result<Vec<T>> {
    if scores.is_empty() {
        return Err(Error::Empty("softmax"));
    }
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Backward of [`softmax`] given its output `y` and upstream gradient `dy`.
pub fn softmax_backward<T: Scalar>(y: &[T], dy: &[T]) -> Vec<T> {
    let dot: T = y.iter().zip(dy).map(|(&a, &b)| a * b).sum();
    y.iter().zip(dy).map(|(&a, &g)| a * (g - dot)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: [usize; 4], seed: u32) -> Tensor<f64> {
        let mut s = seed;
        Tensor::from_fn(dims, |_, _, _, _| {
            s = s.wrapping_mul(1664525).wrapping_add(1013904223);
            (s >> 8) as f64 / (1u32 << 24) as f64 - 0.5
        })
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::<f32>::new([1, 2, 2, 2], vec![0.0; 7]).is_err());
    }

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let z = Tensor::<f32>::zeros([1, 2, 3, 3]);
        assert!(z.sigmoid().data().iter().all(|&v| v == 0.5));
        assert!(z.tanh().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0f32), 1.0);
        assert_eq!(sigmoid(-1000.0f32), 0.0);
        assert!(sigmoid(-80.0f32).is_finite());
    }

    #[test]
    fn elementwise_ops_match_scalar_loop() {
        let a = t([1, 2, 3, 3], 1);
        let b = t([1, 2, 3, 3], 2);
        let (sum, diff, prod) = (a.add(&b).unwrap(), a.sub(&b).unwrap(), a.hadamard(&b).unwrap());
        for i in 0..a.len() {
            assert_eq!(sum.data()[i], a.data()[i] + b.data()[i]);
            assert_eq!(diff.data()[i], a.data()[i] - b.data()[i]);
            assert_eq!(prod.data()[i], a.data()[i] * b.data()[i]);
        }
        let ones = Tensor::full(a.dims(), 1.0);
        assert_eq!(a.hadamard(&ones).unwrap(), a);
        assert!(a.sub(&a).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let a = Tensor::<f32>::zeros([1, 2, 3, 3]);
        let b = Tensor::<f32>::zeros([1, 2, 3, 4]);
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch { .. })));
        assert!(a.hadamard(&b).is_err());
    }

    #[test]
    fn concat_and_slice_back() {
        let a = t([2, 2, 4, 4], 3);
        let b = t([2, 3, 4, 4], 4);
        let c = a.concat_channels(&b).unwrap();
        assert_eq!(c.dims(), [2, 5, 4, 4]);
        assert_eq!(c.slice_channels(0, 2).unwrap(), a);
        assert_eq!(c.slice_channels(2, 3).unwrap(), b);
        let empty = Tensor::<f64>::zeros([2, 0, 4, 4]);
        assert_eq!(a.concat_channels(&empty).unwrap(), a);
        assert!(a.concat_channels(&Tensor::zeros([2, 1, 3, 4])).is_err());
    }

    #[test]
    fn global_avg_pool_values() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x.global_avg_pool().unwrap().data(), &[2.5]);
        let c = Tensor::<f64>::full([2, 3, 3, 5], 0.75);
        assert!(c.global_avg_pool().unwrap().data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
        let r = t([2, 3, 4, 5], 9);
        let p = r.global_avg_pool().unwrap();
        for b in 0..2 {
            for ch in 0..3 {
                let mut s = 0.0;
                for y in 0..4 {
                    for x in 0..5 {
                        s += r.at(b, ch, y, x);
                    }
                }
                assert!((p.at(b, ch, 0, 0) - s / 20.0).abs() < 1e-12);
            }
        }
        assert!(Tensor::<f32>::zeros([1, 1, 0, 3]).global_avg_pool().is_err());
    }

    #[test]
    fn softmax_cases() {
        let u = softmax(&[0.0f64, 0.0, 0.0]).unwrap();
        assert!(u.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(softmax(&[4.2f32]).unwrap(), vec![1.0]);
        let big = softmax(&[1000.0f32, 1000.0]).unwrap();
        assert_eq!(big, vec![0.5, 0.5]);
        assert!(softmax::<f32>(&[]).is_err());
    }
}
