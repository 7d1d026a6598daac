//! Fully connected LSTM on plain vectors.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::tensor::{sigmoid, Scalar};

/// Gate order along rows is u, i, f, o.
#[derive(Clone, Debug, PartialEq)]
pub struct VanillaParams<T> {
    pub input_size: usize,
    pub hidden: usize,
    /// (4 * hidden) x input_size, row-major.
    pub w: Vec<T>,
    /// (4 * hidden) x hidden, row-major.
    pub u: Vec<T>,
    pub b: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VanillaState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> VanillaState<T> {
    pub fn zeros(hidden: usize) -> Self {
        VanillaState {
            h: vec![T::zero(); hidden],
            c: vec![T::zero(); hidden],
        }
    }
}

#[derive(Clone, Debug)]
pub struct VanillaGrads<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    pub params: VanillaParams<T>,
}

impl<T: Scalar> VanillaParams<T> {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        VanillaParams {
            input_size,
            hidden,
            w: vec![T::zero(); 4 * hidden * input_size],
            u: vec![T::zero(); 4 * hidden * hidden],
            b: vec![T::zero(); 4 * hidden],
        }
    }

    pub fn init(input_size: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_size, hidden);
        let kw = 1.0 / (input_size.max(1) as f64).sqrt();
        let ku = 1.0 / (hidden.max(1) as f64).sqrt();
        p.w.iter_mut().for_each(|v| *v = T::of(rng.gen_range(-kw..=kw)));
        p.u.iter_mut().for_each(|v| *v = T::of(rng.gen_range(-ku..=ku)));
        p
    }

    fn preactivations(&self, x: &[T], h: &[T]) -> Vec<T> {
        (0..4 * self.hidden)
            .map(|r| {
                let wx: T = self.w[r * self.input_size..(r + 1) * self.input_size]
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| a * b)
                    .sum();
                let uh: T = self.u[r * self.hidden..(r + 1) * self.hidden]
                    .iter()
                    .zip(h)
                    .map(|(&a, &b)| a * b)
                    .sum();
                wx + uh + self.b[r]
            })
            .collect()
    }

    fn check(&self, x: &[T], state: &VanillaState<T>) -> Result<()> {
        if x.len() != self.input_size || state.h.len() != self.hidden || state.c.len() != self.hidden {
            return Err(Error::shape(
                "vanilla_lstm_step",
                &[self.input_size, self.hidden],
                &[x.len(), state.h.len(), state.c.len()],
            ));
        }
        Ok(())
    }
}

struct Gates<T> {
    u: Vec<T>,
    i: Vec<T>,
    f: Vec<T>,
    o: Vec<T>,
}

fn gates<T: Scalar>(p: &VanillaParams<T>, x: &[T], h: &[T]) -> Gates<T> {
    let pre = p.preactivations(x, h);
    let d = p.hidden;
    Gates {
        u: pre[..d].iter().map(|v| v.tanh()).collect(),
        i: pre[d..2 * d].iter().map(|&v| sigmoid(v)).collect(),
        f: pre[2 * d..3 * d].iter().map(|&v| sigmoid(v)).collect(),
        o: pre[3 * d..].iter().map(|&v| sigmoid(v)).collect(),
    }
}

/// `c' = i*u + f*c`, `h' = o*tanh(c')`.
pub fn vanilla_lstm_step<T: Scalar>(
    x: &[T],
    state: &VanillaState<T>,
    params: &VanillaParams<T>,
) -> Result<VanillaState<T>> {
    params.check(x, state)?;
    let g = gates(params, x, &state.h);
    let c: Vec<T> = (0..params.hidden)
        .map(|k| g.i[k] * g.u[k] + g.f[k] * state.c[k])
        .collect();
    let h = (0..params.hidden).map(|k| g.o[k] * c[k].tanh()).collect();
    Ok(VanillaState { h, c })
}

/// Gradients of `dh . h' + dc . c'` for one step (recomputes the forward pass).
pub fn vanilla_lstm_backward<T: Scalar>(
    x: &[T],
    state: &VanillaState<T>,
    params: &VanillaParams<T>,
    dh: &[T],
    dc: &[T],
) -> Result<VanillaGrads<T>> {
    params.check(x, state)?;
    let d = params.hidden;
    let n_in = params.input_size;
    let g = gates(params, x, &state.h);
    let mut d_pre = vec![T::zero(); 4 * d];
    let mut c_prev = vec![T::zero(); d];
    for k in 0..d {
        let c = g.i[k] * g.u[k] + g.f[k] * state.c[k];
        let tc = c.tanh();
        let dck = dc[k] + dh[k] * g.o[k] * (T::one() - tc * tc);
        d_pre[k] = dck * g.i[k] * (T::one() - g.u[k] * g.u[k]);
        d_pre[d + k] = dck * g.u[k] * g.i[k] * (T::one() - g.i[k]);
        d_pre[2 * d + k] = dck * state.c[k] * g.f[k] * (T::one() - g.f[k]);
        d_pre[3 * d + k] = dh[k] * tc * g.o[k] * (T::one() - g.o[k]);
        c_prev[k] = dck * g.f[k];
    }
    let mut grads = VanillaGrads {
        x: vec![T::zero(); n_in],
        h_prev: vec![T::zero(); d],
        c_prev,
        params: VanillaParams::zeros(n_in, d),
    };
    for (r, &gp) in d_pre.iter().enumerate() {
        for j in 0..n_in {
            grads.params.w[r * n_in + j] = gp * x[j];
            grads.x[j] += gp * params.w[r * n_in + j];
        }
        for j in 0..d {
            grads.params.u[r * d + j] = gp * state.h[j];
            grads.h_prev[j] += gp * params.u[r * d + j];
        }
        grads.params.b[r] = gp;
    }
    Ok(grads)
}

impl<T: Scalar> Parameters<T> for VanillaParams<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f(&join(prefix, "w"), &[4 * self.hidden, self.input_size], &self.w);
        f(&join(prefix, "u"), &[4 * self.hidden, self.hidden], &self.u);
        f(&join(prefix, "b"), &[4 * self.hidden], &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let (r, i, d) = (4 * self.hidden, self.input_size, self.hidden);
        f(&join(prefix, "w"), &[r, i], &mut self.w);
        f(&join(prefix, "u"), &[r, d], &mut self.u);
        f(&join(prefix, "b"), &[r], &mut self.b);
    }
}
