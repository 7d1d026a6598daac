use rand::Rng;

use crate::conv::{add_bias, bias_grad, conv_accumulate, conv_input_grad, conv_weight_grad};
use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::tensor::{Scalar, Tensor};

/// Fused weights for a group of gates sharing one input and one recurrent stream.
///
/// Gates are stacked along output channels, `hidden` channels each. The first
/// gate is the tanh candidate `u`; every later gate is a sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams<T> {
    /// (gates * hidden, in_channels, k, k)
    pub input_kernel: Tensor<T>,
    /// (gates * hidden, hidden, k, k)
    pub state_kernel: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> GateParams<T> {
    pub fn zeros(gates: usize, in_channels: usize, hidden: usize, kernel: usize) -> Self {
        GateParams {
            input_kernel: Tensor::zeros([gates * hidden, in_channels, kernel, kernel]),
            state_kernel: Tensor::zeros([gates * hidden, hidden, kernel, kernel]),
            bias: vec![T::zero(); gates * hidden],
        }
    }

    pub(crate) fn randomize(&mut self, rng: &mut impl Rng) {
        for kernel in [&mut self.input_kernel, &mut self.state_kernel] {
            let [_, ic, kh, kw] = kernel.dims();
            let bound = 1.0 / ((ic * kh * kw).max(1) as f64).sqrt();
            for v in kernel.data_mut() {
                *v = T::of(rng.gen_range(-bound..=bound));
            }
        }
    }

    pub fn hidden(&self) -> usize {
        self.state_kernel.dims()[1]
    }

    pub fn gates(&self) -> usize {
        self.bias.len() / self.hidden().max(1)
    }

    /// Gate activations `(B, gates * hidden, H, W)`; `input = None` is an all-zero input.
    pub(crate) fn forward(&self, input: Option<&Tensor<T>>, rec: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.hidden();
        let [b, rc, h, w] = rec.dims();
        if rc != d {
            return Err(Error::shape("gate recurrent stream", &rec.dims(), &self.state_kernel.dims()));
        }
        if let Some(x) = input {
            let [xb, _, xh, xw] = x.dims();
            if (xb, xh, xw) != (b, h, w) {
                return Err(Error::shape("gate input stream", &x.dims(), &rec.dims()));
            }
        }
        let mut pre = Tensor::zeros([b, self.bias.len(), h, w]);
        add_bias(&mut pre, &self.bias);
        if let Some(x) = input {
            conv_accumulate(x, &self.input_kernel, &mut pre)?;
        }
        conv_accumulate(rec, &self.state_kernel, &mut pre)?;
        let span = d * h * w;
        let per_sample = self.bias.len() * h * w;
        for chunk in pre.data_mut().chunks_exact_mut(per_sample) {
            let (cand, rest) = chunk.split_at_mut(span);
            cand.iter_mut().for_each(|v| *v = v.tanh());
            rest.iter_mut().for_each(|v| *v = crate::tensor::sigmoid(*v));
        }
        Ok(pre)
    }

    /// Backpropagates gate-activation gradients. Accumulates parameter gradients
    /// into `grads` and returns `(d_input, d_rec)`.
    pub(crate) fn backward(
        &self,
        input: Option<&Tensor<T>>,
        rec: &Tensor<T>,
        acts: &Tensor<T>,
        d_acts: &Tensor<T>,
        grads: &mut GateParams<T>,
    ) -> Result<(Option<Tensor<T>>, Tensor<T>)> {
        acts.check_same(d_acts, "gate backward")?;
        let d = self.hidden();
        let [_, _, h, w] = acts.dims();
        let span = d * h * w;
        let per_sample = self.bias.len() * h * w;
        let mut d_pre = d_acts.clone();
        for (dchunk, achunk) in d_pre
            .data_mut()
            .chunks_exact_mut(per_sample)
            .zip(acts.data().chunks_exact(per_sample))
        {
            for (i, (g, &a)) in dchunk.iter_mut().zip(achunk).enumerate() {
                *g = if i < span {
                    *g * (T::one() - a * a)
                } else {
                    *g * a * (T::one() - a)
                };
            }
        }
        bias_grad(&d_pre, &mut grads.bias);
        conv_weight_grad(rec, &d_pre, &mut grads.state_kernel)?;
        let d_rec = conv_input_grad(&self.state_kernel, &d_pre)?;
        let d_input = match input {
            Some(x) => {
                conv_weight_grad(x, &d_pre, &mut grads.input_kernel)?;
                Some(conv_input_grad(&self.input_kernel, &d_pre)?)
            }
            None => None,
        };
        Ok((d_input, d_rec))
    }
}

/// Splits stacked gate channels into one tensor per gate.
pub(crate) fn split_gates<T: Scalar>(acts: &Tensor<T>, hidden: usize) -> Result<Vec<Tensor<T>>> {
    acts.split_channels(hidden)
}

/// Inverse of [`split_gates`].
pub(crate) fn stack_gates<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or(Error::Empty("stack_gates"))?;
    let [b, c, h, w] = first.dims();
    let plane = c * h * w;
    let mut data = Vec::with_capacity(plane * b * parts.len());
    for s in 0..b {
        for p in parts {
            first.check_same(p, "stack_gates")?;
            data.extend_from_slice(&p.data()[s * plane..(s + 1) * plane]);
        }
    }
    Tensor::new([b, c * parts.len(), h, w], data)
}

impl<T: Scalar> Parameters<T> for GateParams<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f(&join(prefix, "input"), &self.input_kernel.dims(), self.input_kernel.data());
        f(&join(prefix, "state"), &self.state_kernel.dims(), self.state_kernel.data());
        f(&join(prefix, "bias"), &[self.bias.len()], &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let dims = self.input_kernel.dims();
        f(&join(prefix, "input"), &dims, self.input_kernel.data_mut());
        let dims = self.state_kernel.dims();
        f(&join(prefix, "state"), &dims, self.state_kernel.data_mut());
        let n = self.bias.len();
        f(&join(prefix, "bias"), &[n], &mut self.bias);
    }
}
