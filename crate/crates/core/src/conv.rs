//! Stride-1 "same" 2D convolution with zero padding, lowered to GEMM via im2col.

use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

/// Convolution weights of dims (out_channels, in_channels, kernel_h, kernel_w) plus a
/// per-output-channel bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvKernel<T> {
    pub fn new(weight: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        let [oc, _, kh, kw] = weight.dims();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel dims must be odd, got {kh}x{kw}"
            )));
        }
        if bias.len() != oc {
            return Err(Error::shape("ConvKernel::new", &weight.dims(), &[bias.len()]));
        }
        Ok(ConvKernel { weight, bias })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        ConvKernel {
            weight: Tensor::zeros([out_channels, in_channels, kernel, kernel]),
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }
}

/// Gradients of `sum(grad_out * conv2d(x, k))`.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Vec<T>,
}

pub fn conv2d<T: Scalar>(x: &Tensor<T>, k: &ConvKernel<T>) -> Result<Tensor<T>> {
    check_kernel(x, &k.weight)?;
    let [b, _, h, w] = x.dims();
    let oc = k.out_channels();
    let mut out = Tensor::zeros([b, oc, h, w]);
    add_bias(&mut out, &k.bias);
    conv_accumulate(x, &k.weight, &mut out)?;
    Ok(out)
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    k: &ConvKernel<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    check_kernel(x, &k.weight)?;
    let [b, _, h, w] = x.dims();
    let expected = [b, k.out_channels(), h, w];
    if grad_out.dims() != expected {
        return Err(Error::shape("conv2d_backward", &expected, &grad_out.dims()));
    }
    let mut grad_weight = Tensor::zeros(k.weight.dims());
    conv_weight_grad(x, grad_out, &mut grad_weight)?;
    let grad_x = conv_input_grad(&k.weight, grad_out)?;
    let mut grad_bias = vec![T::zero(); k.out_channels()];
    bias_grad(grad_out, &mut grad_bias);
    Ok(ConvGrads {
        grad_x,
        grad_weight,
        grad_bias,
    })
}

fn check_kernel<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>) -> Result<()> {
    let [_, ic, kh, kw] = weight.dims();
    if x.channels() != ic {
        return Err(Error::shape("conv2d", &x.dims(), &weight.dims()));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel dims must be odd, got {kh}x{kw}"
        )));
    }
    Ok(())
}

pub(crate) fn add_bias<T: Scalar>(out: &mut Tensor<T>, bias: &[T]) {
    let [b, c, _, _] = out.dims();
    debug_assert_eq!(bias.len(), c);
    let plane = out.plane_len();
    for s in 0..b {
        for (ch, &bv) in bias.iter().enumerate() {
            let off = (s * c + ch) * plane;
            out.data_mut()[off..off + plane]
                .iter_mut()
                .for_each(|v| *v += bv);
        }
    }
}

pub(crate) fn bias_grad<T: Scalar>(grad_out: &Tensor<T>, acc: &mut [T]) {
    let [b, c, _, _] = grad_out.dims();
    let plane = grad_out.plane_len();
    for s in 0..b {
        for (ch, a) in acc.iter_mut().enumerate().take(c) {
            let off = (s * c + ch) * plane;
            *a += grad_out.data()[off..off + plane].iter().copied().sum::<T>();
        }
    }
}

/// Unrolls one sample (ic, h, w) into a (ic*kh*kw, h*w) patch matrix.
fn im2col<T: Scalar>(src: &[T], ic: usize, h: usize, w: usize, kh: usize, kw: usize, cols: &mut [T]) {
    let (ph, pw) = (kh / 2, kw / 2);
    let plane = h * w;
    for ci in 0..ic {
        let img = &src[ci * plane..(ci + 1) * plane];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let x_lo = pw.saturating_sub(kx);
                let x_hi = (w + pw).saturating_sub(kx).min(w);
                for y in 0..h {
                    let line = &mut dst[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - ph as isize;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let sy = sy as usize;
                    line[..x_lo].iter_mut().for_each(|v| *v = T::zero());
                    line[x_hi..].iter_mut().for_each(|v| *v = T::zero());
                    let sx = x_lo + kx - pw;
                    line[x_lo..x_hi].copy_from_slice(&img[sy * w + sx..sy * w + sx + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Scatter-adds a patch matrix back onto one sample; inverse layout of [`im2col`].
fn col2im<T: Scalar>(cols: &[T], ic: usize, h: usize, w: usize, kh: usize, kw: usize, dst: &mut [T]) {
    let (ph, pw) = (kh / 2, kw / 2);
    let plane = h * w;
    for ci in 0..ic {
        let img = &mut dst[ci * plane..(ci + 1) * plane];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let x_lo = pw.saturating_sub(kx);
                let x_hi = (w + pw).saturating_sub(kx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let sx = x_lo + kx - pw;
                    let target = &mut img[sy * w + sx..sy * w + sx + (x_hi - x_lo)];
                    for (t, &v) in target.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                        *t += v;
                    }
                }
            }
        }
    }
}

/// `out += conv(x, weight)` without bias.
pub(crate) fn conv_accumulate<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    out: &mut Tensor<T>,
) -> Result<()> {
    check_kernel(x, weight)?;
    let [b, ic, h, w] = x.dims();
    let [oc, _, kh, kw] = weight.dims();
    if out.dims() != [b, oc, h, w] {
        return Err(Error::shape("conv_accumulate", &[b, oc, h, w], &out.dims()));
    }
    let plane = h * w;
    let k = ic * kh * kw;
    let pointwise = kh == 1 && kw == 1;
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * plane] };
    for s in 0..b {
        let patches: &[T] = if pointwise {
            x.sample(s)
        } else {
            im2col(x.sample(s), ic, h, w, kh, kw, &mut cols);
            &cols
        };
        gemm(
            MatRef::new(weight.data(), oc, k),
            MatRef::new(patches, k, plane),
            T::one(),
            out.sample_mut(s),
        );
    }
    Ok(())
}

/// `acc += dL/dweight` for `out = conv(x, weight)` and upstream `grad_out`.
pub(crate) fn conv_weight_grad<T: Scalar>(
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    acc: &mut Tensor<T>,
) -> Result<()> {
    let [b, ic, h, w] = x.dims();
    let [oc, ic2, kh, kw] = acc.dims();
    if ic != ic2 || grad_out.dims() != [b, oc, h, w] {
        return Err(Error::shape("conv_weight_grad", &x.dims(), &grad_out.dims()));
    }
    let plane = h * w;
    let k = ic * kh * kw;
    let pointwise = kh == 1 && kw == 1;
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * plane] };
    for s in 0..b {
        let patches: &[T] = if pointwise {
            x.sample(s)
        } else {
            im2col(x.sample(s), ic, h, w, kh, kw, &mut cols);
            &cols
        };
        gemm(
            MatRef::new(grad_out.sample(s), oc, plane),
            MatRef::new(patches, k, plane).t(),
            T::one(),
            acc.data_mut(),
        );
    }
    Ok(())
}

/// `dL/dx` for `out = conv(x, weight)` and upstream `grad_out`.
pub(crate) fn conv_input_grad<T: Scalar>(weight: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [oc, ic, kh, kw] = weight.dims();
    let [b, goc, h, w] = grad_out.dims();
    if goc != oc {
        return Err(Error::shape("conv_input_grad", &weight.dims(), &grad_out.dims()));
    }
    let plane = h * w;
    let k = ic * kh * kw;
    let mut grad_x = Tensor::zeros([b, ic, h, w]);
    if kh == 1 && kw == 1 {
        for s in 0..b {
            gemm(
                MatRef::new(weight.data(), oc, k).t(),
                MatRef::new(grad_out.sample(s), oc, plane),
                T::zero(),
                grad_x.sample_mut(s),
            );
        }
        return Ok(grad_x);
    }
    let mut cols = vec![T::zero(); k * plane];
    for s in 0..b {
        gemm(
            MatRef::new(weight.data(), oc, k).t(),
            MatRef::new(grad_out.sample(s), oc, plane),
            T::zero(),
            &mut cols,
        );
        col2im(&cols, ic, h, w, kh, kw, grad_x.sample_mut(s));
    }
    Ok(grad_x)
}
