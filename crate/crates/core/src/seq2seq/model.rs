use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{attend, attend_backward, AttentionCache, AttentionParams, EncoderMemory};
use super::config::StackConfig;
use crate::cells::{cell_backward, cell_forward, CascadedState, CellCache, CellParams, StateGrad};
use crate::conv::{conv2d, conv2d_backward, ConvKernel};
use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::tensor::{Scalar, Tensor};

/// Stacked encoder-decoder with attention and a 1x1 sigmoid output head.
///
/// Encoder and decoder have separate weights. The decoder starts from the
/// encoder's final per-layer states and its first input is the last observed
/// frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2Seq<T> {
    pub config: StackConfig,
    pub encoder: Vec<CellParams<T>>,
    pub decoder: Vec<CellParams<T>>,
    pub attention: AttentionParams<T>,
    /// 1x1 kernel mapping `[top hidden; context]` to frame channels.
    pub head: ConvKernel<T>,
}

/// Result of running the encoder.
#[derive(Clone, Debug)]
pub struct Encoded<T> {
    /// Top-layer hidden map per input step.
    pub hidden: Vec<Tensor<T>>,
    /// Final state of each layer.
    pub states: Vec<CascadedState<T>>,
}

struct DecodeCache<T> {
    top: Tensor<T>,
    attn: AttentionCache<T>,
    head_in: Tensor<T>,
    pred: Tensor<T>,
}

/// Everything the backward pass needs from one unrolled forward pass.
pub struct Trace<T> {
    enc_cells: Vec<Vec<CellCache<T>>>,
    dec_cells: Vec<Vec<CellCache<T>>>,
    decode: Vec<DecodeCache<T>>,
    memory: EncoderMemory<T>,
    /// `fed_back[k]`: decoder input at step k was the model's own prediction k-1.
    fed_back: Vec<bool>,
}

impl<T> Trace<T> {
    pub fn predictions(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.decode.iter().map(|d| &d.pred)
    }
}

impl<T: Scalar> Seq2Seq<T> {
    pub fn zeros(config: &StackConfig) -> Result<Self> {
        Self::build(config, None)
    }

    /// Seeded initialization.
    pub fn init(config: &StackConfig, seed: u64) -> Result<Self> {
        Self::build(config, Some(&mut ChaCha8Rng::seed_from_u64(seed)))
    }

    fn build(config: &StackConfig, mut rng: Option<&mut ChaCha8Rng>) -> Result<Self> {
        let v = config.violations();
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        let (d, k) = (config.hidden_channels, config.kernel_size);
        let mut layer = |l: usize| {
            let ic = if l == 0 { config.input_channels } else { d };
            match rng.as_deref_mut() {
                Some(r) => CellParams::init(config.flavor, ic, d, k, r),
                None => CellParams::zeros(config.flavor, ic, d, k),
            }
        };
        let encoder: Vec<_> = (0..config.num_layers).map(&mut layer).collect();
        let decoder: Vec<_> = (0..config.num_layers).map(&mut layer).collect();
        let (attention, head) = match rng {
            Some(r) => {
                let attention = AttentionParams::init(d, config.attention_dim, r);
                let mut head = ConvKernel::zeros(config.input_channels, 2 * d, 1);
                let bound = 1.0 / ((2 * d) as f64).sqrt();
                for w in head.weight.data_mut() {
                    *w = T::of(rand::Rng::gen_range(r, -bound..=bound));
                }
                (attention, head)
            }
            None => (
                AttentionParams::zeros(d, config.attention_dim),
                ConvKernel::zeros(config.input_channels, 2 * d, 1),
            ),
        };
        Ok(Seq2Seq {
            config: config.clone(),
            encoder,
            decoder,
            attention,
            head,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Seq2Seq<U> {
        let mut out = Seq2Seq::<U>::zeros(&self.config).expect("config already validated");
        let flat: Vec<U> = self.flatten().into_iter().map(|v| U::of(v.as_f64())).collect();
        out.load_flat(&flat);
        out
    }

    fn check_frames(&self, frames: &[Tensor<T>], what: &'static str) -> Result<[usize; 4]> {
        let first = frames.first().ok_or(Error::Empty(what))?;
        let dims = first.dims();
        if dims[1] != self.config.input_channels {
            return Err(Error::shape(
                what,
                &dims,
                &[dims[0], self.config.input_channels, dims[2], dims[3]],
            ));
        }
        for f in frames {
            first.check_same(f, what)?;
        }
        Ok(dims)
    }

    fn initial_states(&self, dims: [usize; 4]) -> Vec<CascadedState<T>> {
        let [b, _, h, w] = dims;
        (0..self.config.num_layers)
            .map(|_| CascadedState::zeros(b, self.config.hidden_channels, h, w))
            .collect()
    }

    /// Runs one time step through a stack, returning the top hidden map.
    fn stack_step(
        layers: &[CellParams<T>],
        frame: &Tensor<T>,
        states: &mut [CascadedState<T>],
        caches: Option<&mut Vec<CellCache<T>>>,
    ) -> Result<Tensor<T>> {
        let mut kept = Vec::new();
        let mut input = frame.clone();
        for (params, state) in layers.iter().zip(states.iter_mut()) {
            let (next, cache) = cell_forward(params, &input, state)?;
            input = next.h.clone();
            *state = next;
            kept.push(cache);
        }
        if let Some(c) = caches {
            *c = kept;
        }
        Ok(input)
    }

    /// Encodes `frames`, each `(B, input_channels, H, W)`.
    pub fn encode(&self, frames: &[Tensor<T>]) -> Result<Encoded<T>> {
        let dims = self.check_frames(frames, "encode")?;
        let mut states = self.initial_states(dims);
        let hidden = frames
            .iter()
            .map(|f| Self::stack_step(&self.encoder, f, &mut states, None))
            .collect::<Result<_>>()?;
        Ok(Encoded { hidden, states })
    }

    fn head_forward(&self, top: &Tensor<T>, memory: &EncoderMemory<T>) -> Result<DecodeCache<T>> {
        let (ctx, attn) = attend(memory, top, &self.attention)?;
        let head_in = top.concat_channels(&ctx)?;
        let pred = conv2d(&head_in, &self.head)?.sigmoid();
        Ok(DecodeCache {
            top: top.clone(),
            attn,
            head_in,
            pred,
        })
    }

    /// One decoder step. Returns the predicted frame and the updated states.
    pub fn decode_step(
        &self,
        prev_frame: &Tensor<T>,
        states: &[CascadedState<T>],
        memory: &EncoderMemory<T>,
    ) -> Result<(Tensor<T>, Vec<CascadedState<T>>)> {
        self.check_frames(std::slice::from_ref(prev_frame), "decode_step")?;
        if states.len() != self.config.num_layers {
            return Err(Error::InvalidArgument(format!(
                "decode_step: {} states for {} layers",
                states.len(),
                self.config.num_layers
            )));
        }
        let mut states = states.to_vec();
        let top = Self::stack_step(&self.decoder, prev_frame, &mut states, None)?;
        Ok((self.head_forward(&top, memory)?.pred, states))
    }

    /// Closed-loop rollout of `out_len` frames.
    pub fn predict(&self, frames: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        if frames.len() != self.config.in_len {
            return Err(Error::InvalidArgument(format!(
                "predict: expected {} input frames, got {}",
                self.config.in_len,
                frames.len()
            )));
        }
        let enc = self.encode(frames)?;
        let memory = EncoderMemory::new(enc.hidden)?;
        let mut states = enc.states;
        let mut prev = frames[frames.len() - 1].clone();
        let mut out = Vec::with_capacity(self.config.out_len);
        for _ in 0..self.config.out_len {
            let (pred, next) = self.decode_step(&prev, &states, &memory)?;
            states = next;
            prev = pred.clone();
            out.push(pred);
        }
        Ok(out)
    }

    /// Unrolled forward pass with caches. `forcing[k-1]` selects the ground truth
    /// `targets[k-1]` as decoder input at step `k >= 1`; otherwise the model's
    /// own previous prediction is fed back.
    pub fn forward_traced(
        &self,
        inputs: &[Tensor<T>],
        targets: &[Tensor<T>],
        forcing: &[bool],
    ) -> Result<Trace<T>> {
        let dims = self.check_frames(inputs, "forward inputs")?;
        if inputs.len() != self.config.in_len || targets.len() != self.config.out_len {
            return Err(Error::InvalidArgument(format!(
                "forward: expected {}+{} frames, got {}+{}",
                self.config.in_len,
                self.config.out_len,
                inputs.len(),
                targets.len()
            )));
        }
        self.check_frames(targets, "forward targets")?;
        if targets[0].dims() != dims {
            return Err(Error::shape("forward targets", &dims, &targets[0].dims()));
        }
        if forcing.len() + 1 < self.config.out_len {
            return Err(Error::InvalidArgument(format!(
                "forward: {} forcing flags for {} decode steps",
                forcing.len(),
                self.config.out_len
            )));
        }
        let mut states = self.initial_states(dims);
        let mut enc_cells = Vec::with_capacity(inputs.len());
        let mut hidden = Vec::with_capacity(inputs.len());
        for f in inputs {
            let mut caches = Vec::new();
            hidden.push(Self::stack_step(&self.encoder, f, &mut states, Some(&mut caches))?);
            enc_cells.push(caches);
        }
        let memory = EncoderMemory::new(hidden)?;
        let mut dec_cells = Vec::with_capacity(targets.len());
        let mut decode: Vec<DecodeCache<T>> = Vec::with_capacity(targets.len());
        let mut fed_back = Vec::with_capacity(targets.len());
        for k in 0..self.config.out_len {
            let (input, own) = match k {
                0 => (&inputs[inputs.len() - 1], false),
                _ if forcing[k - 1] => (&targets[k - 1], false),
                _ => (&decode[k - 1].pred, true),
            };
            let input = input.clone();
            let mut caches = Vec::new();
            let top = Self::stack_step(&self.decoder, &input, &mut states, Some(&mut caches))?;
            decode.push(self.head_forward(&top, &memory)?);
            dec_cells.push(caches);
            fed_back.push(own);
        }
        Ok(Trace {
            enc_cells,
            dec_cells,
            decode,
            memory,
            fed_back,
        })
    }

    /// Backpropagates `d_preds` (one gradient per decoder output) through a trace.
    pub fn backward(&self, trace: &Trace<T>, d_preds: &[Tensor<T>]) -> Result<Seq2Seq<T>> {
        let mut grads = self.zeros_like();
        let steps = trace.decode.len();
        if d_preds.len() != steps {
            return Err(Error::InvalidArgument(format!(
                "backward: {} prediction gradients for {steps} steps",
                d_preds.len()
            )));
        }
        let d = self.config.hidden_channels;
        let top_dims = trace.memory.hs[0].dims();
        let layers = self.config.num_layers;
        let mut d_preds = d_preds.to_vec();
        let mut d_enc: Vec<Tensor<T>> = trace.memory.hs.iter().map(Tensor::zeros_like).collect();
        let mut d_state: Vec<StateGrad<T>> = (0..layers).map(|_| StateGrad::zeros(top_dims)).collect();

        for k in (0..steps).rev() {
            let dc = &trace.decode[k];
            dc.pred.check_same(&d_preds[k], "backward prediction gradient")?;
            let d_logit = dc
                .pred
                .zip_map(&d_preds[k], "sigmoid head", |p, g| g * p * (T::one() - p))?;
            let hg = conv2d_backward(&dc.head_in, &self.head, &d_logit)?;
            for (a, &g) in grads.head.weight.data_mut().iter_mut().zip(hg.grad_weight.data()) {
                *a += g;
            }
            for (a, &g) in grads.head.bias.iter_mut().zip(&hg.grad_bias) {
                *a += g;
            }
            let mut d_top = hg.grad_x.slice_channels(0, d)?;
            let d_ctx = hg.grad_x.slice_channels(d, d)?;
            let d_from_attn = attend_backward(
                &trace.memory,
                &dc.attn,
                &self.attention,
                &d_ctx,
                &mut d_enc,
                &mut grads.attention,
            )?;
            d_top.add_assign(&d_from_attn)?;
            debug_assert_eq!(dc.top.dims(), d_top.dims());
            d_state[layers - 1].h.add_assign(&d_top)?;
            let d_x = Self::stack_backward(&self.decoder, &trace.dec_cells[k], &mut d_state, &mut grads.decoder)?;
            if trace.fed_back[k] {
                d_preds[k - 1].add_assign(&d_x)?;
            }
        }
        for t in (0..trace.enc_cells.len()).rev() {
            d_state[layers - 1].h.add_assign(&d_enc[t])?;
            Self::stack_backward(&self.encoder, &trace.enc_cells[t], &mut d_state, &mut grads.encoder)?;
        }
        Ok(grads)
    }

    /// Backward through one time step of a stack; returns the gradient of the
    /// bottom layer's input.
    fn stack_backward(
        layers: &[CellParams<T>],
        caches: &[CellCache<T>],
        d_state: &mut [StateGrad<T>],
        grads: &mut [CellParams<T>],
    ) -> Result<Tensor<T>> {
        let mut d_x = None;
        for l in (0..layers.len()).rev() {
            if let Some(dx) = d_x.take() {
                d_state[l].h.add_assign(&dx)?;
            }
            let (dx, prev) = cell_backward(&layers[l], &caches[l], &d_state[l], &mut grads[l])?;
            d_state[l] = prev;
            d_x = Some(dx);
        }
        Ok(d_x.expect("at least one layer"))
    }

    /// Mean squared error over all predicted values and its parameter gradients.
    pub fn loss_and_grad(
        &self,
        inputs: &[Tensor<T>],
        targets: &[Tensor<T>],
        forcing: &[bool],
    ) -> Result<(T, Seq2Seq<T>)> {
        let trace = self.forward_traced(inputs, targets, forcing)?;
        let (loss, d_preds) = mse_with_grad(trace.predictions(), targets)?;
        let grads = self.backward(&trace, &d_preds)?;
        Ok((loss, grads))
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, inputs: &[Tensor<T>], targets: &[Tensor<T>], forcing: &[bool]) -> Result<T> {
        let trace = self.forward_traced(inputs, targets, forcing)?;
        Ok(mse_with_grad(trace.predictions(), targets)?.0)
    }
}

/// Mean of squared differences and its gradient with respect to each prediction.
pub(crate) fn mse_with_grad<'a, T: Scalar>(
    preds: impl Iterator<Item = &'a Tensor<T>>,
    targets: &[Tensor<T>],
) -> Result<(T, Vec<Tensor<T>>)> {
    let preds: Vec<&Tensor<T>> = preds.collect();
    if preds.len() != targets.len() {
        return Err(Error::InvalidArgument("loss: prediction/target count mismatch".into()));
    }
    let n: usize = targets.iter().map(Tensor::len).sum();
    if n == 0 {
        return Err(Error::Empty("loss"));
    }
    let scale = T::of(2.0 / n as f64);
    let mut total = 0.0f64;
    let mut grads = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(targets) {
        p.check_same(t, "loss")?;
        total += p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum::<f64>();
        grads.push(p.zip_map(t, "loss", |a, b| (a - b) * scale)?);
    }
    Ok((T::of(total / n as f64), grads))
}

impl<T: Scalar> Parameters<T> for Seq2Seq<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        for (l, p) in self.encoder.iter().enumerate() {
            p.visit(&join(prefix, &format!("enc.{l}")), f);
        }
        for (l, p) in self.decoder.iter().enumerate() {
            p.visit(&join(prefix, &format!("dec.{l}")), f);
        }
        self.attention.visit(&join(prefix, "attn"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        for (l, p) in self.encoder.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &format!("enc.{l}")), f);
        }
        for (l, p) in self.decoder.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &format!("dec.{l}")), f);
        }
        self.attention.visit_mut(&join(prefix, "attn"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> StackConfig {
        StackConfig {
            num_layers: 2,
            hidden_channels: 2,
            in_len: 2,
            out_len: 2,
            attention_dim: 3,
            ..StackConfig::default()
        }
    }

    fn frames(n: usize, dims: [usize; 4], phase: f32) -> Vec<Tensor<f32>> {
        (0..n)
            .map(|t| Tensor::from_fn(dims, |b, c, y, x| ((b + c + y * x + t) as f32 * 0.37 + phase).sin().abs()))
            .collect()
    }

    #[test]
    fn zero_frames_zero_params_give_zero_hidden() {
        let m = Seq2Seq::<f32>::zeros(&tiny()).unwrap();
        let enc = m.encode(&[Tensor::zeros([1, 3, 4, 4])]).unwrap();
        assert_eq!(enc.hidden.len(), 1);
        assert!(enc.hidden[0].data().iter().all(|&v| v == 0.0));
        assert_eq!(enc.states[1].h, enc.hidden[0]);
    }

    #[test]
    fn zero_params_predict_one_half() {
        let m = Seq2Seq::<f32>::zeros(&tiny()).unwrap();
        let out = m.predict(&frames(2, [2, 3, 5, 6], 0.1)).unwrap();
        assert_eq!(out.len(), 2);
        for f in out {
            assert_eq!(f.dims(), [2, 3, 5, 6]);
            assert!(f.data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn always_forcing_feeds_ground_truth() {
        let m = Seq2Seq::<f32>::init(&tiny(), 1).unwrap();
        let x = frames(2, [1, 3, 4, 4], 0.0);
        let y = frames(2, [1, 3, 4, 4], 1.0);
        let trace = m.forward_traced(&x, &y, &[true]).unwrap();
        assert_eq!(trace.fed_back, vec![false, false]);
        let trace = m.forward_traced(&x, &y, &[false]).unwrap();
        assert_eq!(trace.fed_back, vec![false, true]);
    }

    #[test]
    fn rejects_mismatched_lengths_and_shapes() {
        let m = Seq2Seq::<f32>::init(&tiny(), 1).unwrap();
        let x = frames(2, [1, 3, 4, 4], 0.0);
        assert!(m.predict(&x[..1]).is_err());
        assert!(m.forward_traced(&x, &frames(1, [1, 3, 4, 4], 0.0), &[true]).is_err());
        assert!(m.forward_traced(&x, &frames(2, [1, 3, 4, 5], 0.0), &[true]).is_err());
        assert!(m.encode(&frames(1, [1, 2, 4, 4], 0.0)).is_err());
    }
}
