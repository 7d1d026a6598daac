//! Global additive attention across encoder time steps.
//!
//! Feature maps are average-pooled per channel before scoring, so each
//! (sample, encoder step) pair gets one scalar score
//! `v . tanh(W [pool(h_t); pool(d)])`. The context keeps full spatial maps:
//! `sum_t alpha_t * h_t` with per-sample scalar weights.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::tensor::{global_avg_pool_backward, softmax, softmax_backward, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    pub hidden: usize,
    pub dim: usize,
    /// dim x (2 * hidden), row-major.
    pub w_alpha: Vec<T>,
    pub v_alpha: Vec<T>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn zeros(hidden: usize, dim: usize) -> Self {
        AttentionParams {
            hidden,
            dim,
            w_alpha: vec![T::zero(); dim * 2 * hidden],
            v_alpha: vec![T::zero(); dim],
        }
    }

    pub fn init(hidden: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hidden, dim);
        let kw = 1.0 / ((2 * hidden) as f64).sqrt();
        let kv = 1.0 / (dim as f64).sqrt();
        p.w_alpha.iter_mut().for_each(|v| *v = T::of(rng.gen_range(-kw..=kw)));
        p.v_alpha.iter_mut().for_each(|v| *v = T::of(rng.gen_range(-kv..=kv)));
        p
    }

    /// Returns the score and the tanh activations (for backward).
    fn score_vec(&self, enc: &[T], dec: &[T]) -> (T, Vec<T>) {
        let d = self.hidden;
        let acts: Vec<T> = (0..self.dim)
            .map(|j| {
                let row = &self.w_alpha[j * 2 * d..(j + 1) * 2 * d];
                let z: T = row[..d].iter().zip(enc).map(|(&w, &x)| w * x).sum::<T>()
                    + row[d..].iter().zip(dec).map(|(&w, &x)| w * x).sum::<T>();
                z.tanh()
            })
            .collect();
        let score = acts.iter().zip(&self.v_alpha).map(|(&a, &v)| a * v).sum();
        (score, acts)
    }

    /// Accumulates parameter grads and returns `(d_enc, d_dec)` for one score.
    fn score_backward(
        &self,
        enc: &[T],
        dec: &[T],
        acts: &[T],
        d_score: T,
        grads: &mut AttentionParams<T>,
    ) -> (Vec<T>, Vec<T>) {
        let d = self.hidden;
        let mut d_enc = vec![T::zero(); d];
        let mut d_dec = vec![T::zero(); d];
        for j in 0..self.dim {
            grads.v_alpha[j] += d_score * acts[j];
            let dz = d_score * self.v_alpha[j] * (T::one() - acts[j] * acts[j]);
            let row = j * 2 * d;
            for k in 0..d {
                grads.w_alpha[row + k] += dz * enc[k];
                grads.w_alpha[row + d + k] += dz * dec[k];
                d_enc[k] += dz * self.w_alpha[row + k];
                d_dec[k] += dz * self.w_alpha[row + d + k];
            }
        }
        (d_enc, d_dec)
    }

    fn check(&self, h: &Tensor<T>) -> Result<()> {
        if h.channels() != self.hidden {
            return Err(Error::shape("attention", &h.dims(), &[self.dim, 2 * self.hidden]));
        }
        Ok(())
    }
}

/// Encoder hidden states with their pooled summaries, computed once per sequence.
#[derive(Clone, Debug)]
pub struct EncoderMemory<T> {
    pub hs: Vec<Tensor<T>>,
    pooled: Vec<Tensor<T>>,
}

impl<T: Scalar> EncoderMemory<T> {
    pub fn new(hs: Vec<Tensor<T>>) -> Result<Self> {
        let first = hs.first().ok_or(Error::Empty("attention_context"))?;
        for h in &hs {
            first.check_same(h, "encoder hidden states")?;
        }
        let pooled = hs.iter().map(|h| h.global_avg_pool()).collect::<Result<_>>()?;
        Ok(EncoderMemory { hs, pooled })
    }

    pub fn len(&self) -> usize {
        self.hs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hs.is_empty()
    }
}

/// Intermediates of one attention read.
#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    dec_pooled: Tensor<T>,
    /// `acts[t][b]` tanh activations per step and sample.
    acts: Vec<Vec<Vec<T>>>,
    /// `alphas[b][t]`.
    pub alphas: Vec<Vec<T>>,
}

/// Alignment score per sample for one encoder step.
pub fn attention_score<T: Scalar>(
    h_t: &Tensor<T>,
    d_state: &Tensor<T>,
    params: &AttentionParams<T>,
) -> Result<Vec<T>> {
    h_t.check_same(d_state, "attention_score")?;
    params.check(h_t)?;
    let p = h_t.global_avg_pool()?;
    let q = d_state.global_avg_pool()?;
    Ok((0..h_t.batch())
        .map(|b| params.score_vec(p.sample(b), q.sample(b)).0)
        .collect())
}

/// Context map `sum_t alpha_t h_t` and the weights `alphas[b][t]`.
pub fn attention_context<T: Scalar>(
    enc_hs: &[Tensor<T>],
    d_state: &Tensor<T>,
    params: &AttentionParams<T>,
) -> Result<(Tensor<T>, Vec<Vec<T>>)> {
    let memory = EncoderMemory::new(enc_hs.to_vec())?;
    let (ctx, cache) = attend(&memory, d_state, params)?;
    Ok((ctx, cache.alphas))
}

pub(crate) fn attend<T: Scalar>(
    memory: &EncoderMemory<T>,
    d_state: &Tensor<T>,
    params: &AttentionParams<T>,
) -> Result<(Tensor<T>, AttentionCache<T>)> {
    let first = memory.hs.first().ok_or(Error::Empty("attention_context"))?;
    first.check_same(d_state, "attention_context")?;
    params.check(d_state)?;
    let batch = d_state.batch();
    let q = d_state.global_avg_pool()?;
    let mut acts = Vec::with_capacity(memory.len());
    let mut scores = vec![Vec::with_capacity(memory.len()); batch];
    for p in &memory.pooled {
        let mut step_acts = Vec::with_capacity(batch);
        for (b, row) in scores.iter_mut().enumerate() {
            let (s, a) = params.score_vec(p.sample(b), q.sample(b));
            row.push(s);
            step_acts.push(a);
        }
        acts.push(step_acts);
    }
    let alphas = scores.iter().map(|s| softmax(s)).collect::<Result<Vec<_>>>()?;
    let mut ctx = Tensor::zeros_like(d_state);
    for (t, h) in memory.hs.iter().enumerate() {
        for (b, alpha) in alphas.iter().enumerate() {
            let a = alpha[t];
            for (c, &v) in ctx.sample_mut(b).iter_mut().zip(h.sample(b)) {
                *c += a * v;
            }
        }
    }
    Ok((
        ctx,
        AttentionCache {
            dec_pooled: q,
            acts,
            alphas,
        },
    ))
}

/// Backward of [`attend`]. Adds into `d_enc` (per encoder step) and returns
/// the gradient with respect to the decoder state.
pub(crate) fn attend_backward<T: Scalar>(
    memory: &EncoderMemory<T>,
    cache: &AttentionCache<T>,
    params: &AttentionParams<T>,
    d_ctx: &Tensor<T>,
    d_enc: &mut [Tensor<T>],
    grads: &mut AttentionParams<T>,
) -> Result<Tensor<T>> {
    let [batch, d, h, w] = d_ctx.dims();
    let steps = memory.len();
    let mut d_q = Tensor::zeros([batch, d, 1, 1]);
    for b in 0..batch {
        let alpha = &cache.alphas[b];
        let mut d_alpha = vec![T::zero(); steps];
        for t in 0..steps {
            let hs = memory.hs[t].sample(b);
            let g = d_ctx.sample(b);
            d_alpha[t] = hs.iter().zip(g).map(|(&x, &y)| x * y).sum();
            for (dst, &gv) in d_enc[t].sample_mut(b).iter_mut().zip(g) {
                *dst += alpha[t] * gv;
            }
        }
        let d_score = softmax_backward(alpha, &d_alpha);
        for t in 0..steps {
            let p = memory.pooled[t].sample(b);
            let q = cache.dec_pooled.sample(b);
            let (dp, dq) = params.score_backward(p, q, &cache.acts[t][b], d_score[t], grads);
            let plane = (h * w) as f64;
            let inv = T::one() / T::of(plane);
            for (c, &g) in dp.iter().enumerate() {
                let off = (b * d + c) * h * w;
                for v in &mut d_enc[t].data_mut()[off..off + h * w] {
                    *v += g * inv;
                }
            }
            for (acc, &g) in d_q.sample_mut(b).iter_mut().zip(&dq) {
                *acc += g;
            }
        }
    }
    global_avg_pool_backward(&d_q, h, w)
}

impl<T: Scalar> Parameters<T> for AttentionParams<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f(&join(prefix, "w_alpha"), &[self.dim, 2 * self.hidden], &self.w_alpha);
        f(&join(prefix, "v_alpha"), &[self.dim], &self.v_alpha);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let dims = [self.dim, 2 * self.hidden];
        f(&join(prefix, "w_alpha"), &dims, &mut self.w_alpha);
        let n = self.dim;
        f(&join(prefix, "v_alpha"), &[n], &mut self.v_alpha);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_t(dims: [usize; 4], rng: &mut impl Rng) -> Tensor<f64> {
        Tensor::from_fn(dims, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_v_gives_zero_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = AttentionParams::<f64>::init(3, 4, &mut rng);
        p.v_alpha.iter_mut().for_each(|v| *v = 0.0);
        let h = rand_t([2, 3, 4, 4], &mut rng);
        let d = rand_t([2, 3, 4, 4], &mut rng);
        assert_eq!(attention_score(&h, &d, &p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn antisymmetric_rows_on_equal_inputs_score_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = AttentionParams::<f64>::init(3, 5, &mut rng);
        for j in 0..5 {
            for k in 0..3 {
                let w = p.w_alpha[j * 6 + k];
                p.w_alpha[j * 6 + 3 + k] = -w;
            }
        }
        let h = rand_t([2, 3, 4, 4], &mut rng);
        let s = attention_score(&h, &h, &p).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn score_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = AttentionParams::<f64>::init(3, 4, &mut rng);
        let h = rand_t([2, 3, 3, 5], &mut rng);
        let d = rand_t([2, 3, 3, 5], &mut rng);
        let s = attention_score(&h, &d, &p).unwrap();
        for b in 0..2 {
            let mut cat = vec![0.0; 6];
            for c in 0..3 {
                for y in 0..3 {
                    for x in 0..5 {
                        cat[c] += h.at(b, c, y, x) / 15.0;
                        cat[3 + c] += d.at(b, c, y, x) / 15.0;
                    }
                }
            }
            let mut expect = 0.0;
            for j in 0..4 {
                let mut z = 0.0;
                for k in 0..6 {
                    z += p.w_alpha[j * 6 + k] * cat[k];
                }
                expect += p.v_alpha[j] * z.tanh();
            }
            assert!((s[b] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn context_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = AttentionParams::<f64>::init(2, 3, &mut rng);
        let h = rand_t([2, 2, 3, 3], &mut rng);
        let d = rand_t([2, 2, 3, 3], &mut rng);
        let (ctx, alphas) = attention_context(std::slice::from_ref(&h), &d, &p).unwrap();
        assert_eq!(ctx, h);
        assert_eq!(alphas, vec![vec![1.0], vec![1.0]]);
        assert!(attention_context(&[], &d, &p).is_err());

        let zero = AttentionParams::<f64>::zeros(2, 3);
        let hs: Vec<_> = (0..4).map(|_| rand_t([2, 2, 3, 3], &mut rng)).collect();
        let (ctx, _) = attention_context(&hs, &d, &zero).unwrap();
        for i in 0..ctx.len() {
            let mean = hs.iter().map(|h| h.data()[i]).sum::<f64>() / 4.0;
            assert!((ctx.data()[i] - mean).abs() < 1e-12);
        }
    }
}
