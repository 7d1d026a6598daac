//! Finite-difference checks of every hand-written backward pass, grouped by
//! component, in 32-bit or 64-bit arithmetic.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::relative_error;
use crate::cells::{
    cell_backward, cell_forward, module_backward, module_forward, vanilla_lstm_backward, vanilla_lstm_step,
    CascadedState, CellFlavor, CellParams, GateParams, StateGrad, VanillaParams, VanillaState,
};
use crate::error::Result;
use crate::params::Parameters;
use crate::seq2seq::{AttentionParams, EncoderMemory, Seq2Seq, StackConfig};
use crate::tensor::{Scalar, Tensor};

pub const GRAD_GROUPS: [&str; 7] = [
    "vanilla",
    "convlstm",
    "nonstationary",
    "stationary",
    "cascaded",
    "attention",
    "model",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn tolerance(self) -> f64 {
        match self {
            Precision::F32 => 1e-2,
            Precision::F64 => 1e-5,
        }
    }

    fn eps(self) -> f64 {
        match self {
            Precision::F32 => 1e-3,
            Precision::F64 => 1e-6,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub group: &'static str,
    pub precision: Precision,
    /// Relative error of the group's whole gradient vector.
    pub rel_error: f64,
    /// Array with the largest error of its own, for diagnosis.
    pub worst: String,
    pub worst_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for GroupReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<14} {:<4} {:>12.3e} {:>9.0e}  {:<4}  worst array {} ({:.3e})",
            self.group,
            self.precision,
            self.rel_error,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" },
            self.worst,
            self.worst_error
        )
    }
}

/// Named flat arrays that a loss is differentiated against.
struct Leaves<T> {
    names: Vec<String>,
    values: Vec<Vec<T>>,
}

impl<T: Scalar> Leaves<T> {
    fn new() -> Self {
        Leaves {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, v: Vec<T>) {
        self.names.push(name.to_string());
        self.values.push(v);
    }

    fn push_params(&mut self, prefix: &str, p: &dyn Parameters<T>) {
        p.visit(prefix, &mut |name, _, v| self.push(name, v.to_vec()));
    }
}

fn load_params<T: Scalar, P: Parameters<T>>(p: &mut P, leaves: &[Vec<T>]) {
    let mut k = 0;
    p.visit_mut("", &mut |_, _, v| {
        v.copy_from_slice(&leaves[k]);
        k += 1;
    });
}

fn param_grads<T: Scalar>(p: &dyn Parameters<T>) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    p.visit("", &mut |_, _, v| out.push(v.to_vec()));
    out
}

fn tensor_from<T: Scalar>(dims: [usize; 4], v: &[T]) -> Tensor<T> {
    Tensor::new(dims, v.to_vec()).expect("leaf dims")
}

fn random_tensor<T: Scalar>(rng: &mut ChaCha8Rng, dims: [usize; 4], scale: f64) -> Tensor<T> {
    Tensor::from_fn(dims, |_, _, _, _| T::of(rng.gen_range(-scale..scale)))
}

fn randomize_params<T: Scalar>(p: &mut dyn Parameters<T>, rng: &mut ChaCha8Rng, scale: f64) {
    p.visit_mut("", &mut |_, _, v| {
        v.iter_mut().for_each(|x| *x = T::of(rng.gen_range(-scale..scale)));
    });
}

/// `sum r * out` accumulated in 64-bit.
fn project<T: Scalar>(outs: &[&Tensor<T>], r: &[Tensor<T>]) -> T {
    let s: f64 = outs
        .iter()
        .zip(r)
        .map(|(o, r)| o.data().iter().zip(r.data()).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum::<f64>())
        .sum();
    T::of(s)
}

/// Central differences of `loss` alongside the analytic gradient, per leaf.
struct Comparison<T> {
    names: Vec<String>,
    analytic: Vec<Vec<T>>,
    numeric: Vec<Vec<T>>,
}

fn compare<T: Scalar>(
    leaves: &Leaves<T>,
    analytic: &[Vec<T>],
    eps: T,
    loss: &dyn Fn(&[Vec<T>]) -> Result<T>,
) -> Result<Comparison<T>> {
    let mut probe = leaves.values.clone();
    let mut out = Comparison {
        names: leaves.names.clone(),
        analytic: analytic.to_vec(),
        numeric: Vec::with_capacity(leaves.names.len()),
    };
    for k in 0..leaves.names.len() {
        let mut numeric = Vec::with_capacity(probe[k].len());
        for i in 0..probe[k].len() {
            let orig = probe[k][i];
            probe[k][i] = orig + eps;
            let plus = loss(&probe)?;
            probe[k][i] = orig - eps;
            let minus = loss(&probe)?;
            probe[k][i] = orig;
            numeric.push((plus - minus) / (eps + eps));
        }
        out.numeric.push(numeric);
    }
    Ok(out)
}

const B: usize = 2;
const C_IN: usize = 2;
const D: usize = 2;
const HW: usize = 4;
const K: usize = 3;

fn check_vanilla<T: Scalar>(rng: &mut ChaCha8Rng, eps: T, fault: f64) -> Result<Comparison<T>> {
    let (n_in, d) = (3, 4);
    let mut p = VanillaParams::<T>::zeros(n_in, d);
    randomize_params(&mut p, rng, 0.8);
    let rv = |rng: &mut ChaCha8Rng, n: usize| (0..n).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect::<Vec<T>>();
    let (x, h, c) = (rv(rng, n_in), rv(rng, d), rv(rng, d));
    let (rh, rc) = (rv(rng, d), rv(rng, d));
    let mut leaves = Leaves::new();
    leaves.push("x", x.clone());
    leaves.push("h_prev", h.clone());
    leaves.push("c_prev", c.clone());
    leaves.push_params("", &p);
    let loss = |l: &[Vec<T>]| -> Result<T> {
        let mut q = p.clone();
        load_params(&mut q, &l[3..]);
        let st = VanillaState { h: l[1].clone(), c: l[2].clone() };
        let next = vanilla_lstm_step(&l[0], &st, &q)?;
        let s: f64 = next.h.iter().zip(&rh).chain(next.c.iter().zip(&rc)).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
        Ok(T::of(s))
    };
    let g = vanilla_lstm_backward(&x, &VanillaState { h, c }, &p, &rh, &rc)?;
    let mut analytic = vec![g.x, g.h_prev, g.c_prev];
    analytic.extend(param_grads(&g.params));
    corrupt(&mut analytic, fault);
    compare(&leaves, &analytic, eps, &loss)
}

fn cell_params<T: Scalar>(rng: &mut ChaCha8Rng, flavor: CellFlavor) -> CellParams<T> {
    let mut p = CellParams::<T>::init(flavor, C_IN, D, K, rng);
    p.visit_mut("", &mut |name, _, v| {
        if name.ends_with("bias") {
            v.iter_mut().for_each(|x| *x = T::of(rng.gen_range(-0.5..0.5)));
        }
    });
    p
}

fn check_convlstm<T: Scalar>(rng: &mut ChaCha8Rng, eps: T, fault: f64) -> Result<Comparison<T>> {
    let p = cell_params::<T>(rng, CellFlavor::ConvLstm);
    let xd = [B, C_IN, HW, HW];
    let hd = [B, D, HW, HW];
    let x = random_tensor::<T>(rng, xd, 1.0);
    let h = random_tensor::<T>(rng, hd, 1.0);
    let c = random_tensor::<T>(rng, hd, 1.0);
    let r = [random_tensor::<T>(rng, hd, 1.0), random_tensor::<T>(rng, hd, 1.0)];
    let state = |h: Tensor<T>, c: Tensor<T>| CascadedState {
        h,
        c,
        n: Tensor::zeros(hd),
        s: Tensor::zeros(hd),
        prev_input: None,
    };
    let mut leaves = Leaves::new();
    leaves.push("x", x.data().to_vec());
    leaves.push("h_prev", h.data().to_vec());
    leaves.push("c_prev", c.data().to_vec());
    leaves.push_params("", &p);
    let loss = |l: &[Vec<T>]| -> Result<T> {
        let mut q = p.clone();
        load_params(&mut q, &l[3..]);
        let st = state(tensor_from(hd, &l[1]), tensor_from(hd, &l[2]));
        let (next, _) = cell_forward(&q, &tensor_from(xd, &l[0]), &st)?;
        Ok(project(&[&next.h, &next.c], &r))
    };
    let (_, cache) = cell_forward(&p, &x, &state(h, c))?;
    let mut d_next = StateGrad::zeros(hd);
    d_next.h = r[0].clone();
    d_next.c = r[1].clone();
    let mut grads = p.zeros_like();
    let (dx, dprev) = cell_backward(&p, &cache, &d_next, &mut grads)?;
    let mut analytic = vec![dx.into_data(), dprev.h.into_data(), dprev.c.into_data()];
    analytic.extend(param_grads(&grads));
    corrupt(&mut analytic, fault);
    compare(&leaves, &analytic, eps, &loss)
}

fn gate_params<T: Scalar>(rng: &mut ChaCha8Rng, in_channels: usize) -> GateParams<T> {
    let mut p = GateParams::<T>::zeros(4, in_channels, D, K);
    p.randomize(rng);
    p.visit_mut("", &mut |name, _, v| {
        if name.ends_with("bias") {
            v.iter_mut().for_each(|x| *x = T::of(rng.gen_range(-0.5..0.5)));
        }
    });
    p
}

fn check_nonstationary<T: Scalar>(rng: &mut ChaCha8Rng, eps: T, fault: f64) -> Result<Comparison<T>> {
    let p = gate_params::<T>(rng, C_IN);
    let xd = [B, C_IN, HW, HW];
    let hd = [B, D, HW, HW];
    let now = random_tensor::<T>(rng, xd, 1.0);
    let prev = random_tensor::<T>(rng, xd, 1.0);
    let n = random_tensor::<T>(rng, hd, 1.0);
    let r = [random_tensor::<T>(rng, hd, 1.0), random_tensor::<T>(rng, hd, 1.0)];
    let mut leaves = Leaves::new();
    leaves.push("h_below_now", now.data().to_vec());
    leaves.push("h_below_prev", prev.data().to_vec());
    leaves.push("n_prev", n.data().to_vec());
    leaves.push_params("", &p);
    let loss = |l: &[Vec<T>]| -> Result<T> {
        let mut q = p.clone();
        load_params(&mut q, &l[3..]);
        let delta = tensor_from(xd, &l[0]).sub(&tensor_from(xd, &l[1]))?;
        let n = tensor_from(hd, &l[2]);
        let (out, n_new, _) = module_forward(&q, Some(&delta), &n, &n)?;
        Ok(project(&[&out, &n_new], &r))
    };
    let delta = now.sub(&prev)?;
    let (_, _, cache) = module_forward(&p, Some(&delta), &n, &n)?;
    let mut grads = p.zeros_like();
    let (d_delta, d_rec, d_mem) = module_backward(&p, &cache, &r[0], &r[1], &mut grads)?;
    let d_delta = d_delta.expect("input present");
    let mut analytic = vec![
        d_delta.data().to_vec(),
        d_delta.scale(-T::one()).into_data(),
        d_rec.add(&d_mem)?.into_data(),
    ];
    analytic.extend(param_grads(&grads));
    corrupt(&mut analytic, fault);
    compare(&leaves, &analytic, eps, &loss)
}

fn check_stationary<T: Scalar>(rng: &mut ChaCha8Rng, eps: T, fault: f64) -> Result<Comparison<T>> {
    let p = gate_params::<T>(rng, D);
    let hd = [B, D, HW, HW];
    let diff = random_tensor::<T>(rng, hd, 1.0);
    let c = random_tensor::<T>(rng, hd, 1.0);
    let s = random_tensor::<T>(rng, hd, 1.0);
    let r = [random_tensor::<T>(rng, hd, 1.0), random_tensor::<T>(rng, hd, 1.0)];
    let mut leaves = Leaves::new();
    leaves.push("diff", diff.data().to_vec());
    leaves.push("c_prev", c.data().to_vec());
    leaves.push("s_prev", s.data().to_vec());
    leaves.push_params("", &p);
    let loss = |l: &[Vec<T>]| -> Result<T> {
        let mut q = p.clone();
        load_params(&mut q, &l[3..]);
        let (out, s_new, _) = module_forward(
            &q,
            Some(&tensor_from(hd, &l[0])),
            &tensor_from(hd, &l[1]),
            &tensor_from(hd, &l[2]),
        )?;
        Ok(project(&[&out, &s_new], &r))
    };
    let (_, _, cache) = module_forward(&p, Some(&diff), &c, &s)?;
    let mut grads = p.zeros_like();
    let (d_diff, d_c, d_s) = module_backward(&p, &cache, &r[0], &r[1], &mut grads)?;
    let mut analytic = vec![d_diff.expect("input present").into_data(), d_c.into_data(), d_s.into_data()];
    analytic.extend(param_grads(&grads));
    corrupt(&mut analytic, fault);
    compare(&leaves, &analytic, eps, &loss)
}

fn check_cascaded<T: Scalar>(rng: &mut ChaCha8Rng, eps: T, fault: f64) -> Result<Comparison<T>> {
    let p = cell_params::<T>(rng, CellFlavor::Cascaded);
    let xd = [B, C_IN, HW, HW];
    let hd = [B, D, HW, HW];
    let x = random_tensor::<T>(rng, xd, 1.0);
    let prev = random_tensor::<T>(rng, xd, 1.0);
    let st: Vec<Tensor<T>> = (0..4).map(|_| random_tensor(rng, hd, 1.0)).collect();
    let r: Vec<Tensor<T>> = (0..4).map(|_| random_tensor(rng, hd, 1.0)).collect();
    let r_prev = random_tensor::<T>(rng, xd, 1.0);
    let state = |v: &[Vec<T>]| CascadedState {
        h: tensor_from(hd, &v[0]),
        c: tensor_from(hd, &v[1]),
        n: tensor_from(hd, &v[2]),
        s: tensor_from(hd, &v[3]),
        prev_input: Some(tensor_from(xd, &v[4])),
    };
    let mut leaves = Leaves::new();
    leaves.push("x", x.data().to_vec());
    for (name, t) in ["h_prev", "c_prev", "n_prev", "s_prev"].iter().zip(&st) {
        leaves.push(name, t.data().to_vec());
    }
    leaves.push("prev_input", prev.data().to_vec());
    leaves.push_params("", &p);
    let loss = |l: &[Vec<T>]| -> Result<T> {
        let mut q = p.clone();
        load_params(&mut q, &l[6..]);
        let (next, _) = cell_forward(&q, &tensor_from(xd, &l[0]), &state(&l[1..6]))?;
        let mut outs = vec![&next.h, &next.c, &next.n, &next.s];
        let prev_in = next.prev_input.as_ref().expect("cascaded keeps input");
        outs.push(prev_in);
        let mut rr = r.clone();
        rr.push(r_prev.clone());
        Ok(project(&outs, &rr))
    };
    let (_, cache) = cell_forward(&p, &x, &state(&leaves.values[1..6]))?;
    let d_next = StateGrad {
        h: r[0].clone(),
        c: r[1].clone(),
        n: r[2].clone(),
        s: r[3].clone(),
        prev: Some(r_prev.clone()),
    };
    let mut grads = p.zeros_like();
    let (dx, dp) = cell_backward(&p, &cache, &d_next, &mut grads)?;
    let d_prev_input = dp.prev.expect("cascaded returns a previous-input gradient");
    let mut analytic = vec![
        dx.into_data(),
        dp.h.into_data(),
        dp.c.into_data(),
        dp.n.into_data(),
        dp.s.into_data(),
        d_prev_input.into_data(),
    ];
    analytic.extend(param_grads(&grads));
    corrupt(&mut analytic, fault);
    compare(&leaves, &analytic, eps, &loss)
}

fn check_attention<T: Scalar>(rng: &mut ChaCha8Rng, eps: T, fault: f64) -> Result<Comparison<T>> {
    let steps = 3;
    let hd = [B, D, HW, HW];
    let mut p = AttentionParams::<T>::zeros(D, 3);
    randomize_params(&mut p, rng, 2.0);
    let hs: Vec<Tensor<T>> = (0..steps).map(|_| random_tensor(rng, hd, 1.0)).collect();
    let q = random_tensor::<T>(rng, hd, 1.0);
    let r = [random_tensor::<T>(rng, hd, 1.0)];
    let mut leaves = Leaves::new();
    for (t, h) in hs.iter().enumerate() {
        leaves.push(&format!("enc_h{t}"), h.data().to_vec());
    }
    leaves.push("dec_state", q.data().to_vec());
    leaves.push_params("", &p);
    let loss = |l: &[Vec<T>]| -> Result<T> {
        let mut pp = p.clone();
        load_params(&mut pp, &l[steps + 1..]);
        let memory = EncoderMemory::new(l[..steps].iter().map(|v| tensor_from(hd, v)).collect())?;
        let (ctx, _) = crate::seq2seq::attend(&memory, &tensor_from(hd, &l[steps]), &pp)?;
        Ok(project(&[&ctx], &r))
    };
    let memory = EncoderMemory::new(hs)?;
    let (_, cache) = crate::seq2seq::attend(&memory, &q, &p)?;
    let mut d_enc: Vec<Tensor<T>> = (0..steps).map(|_| Tensor::zeros(hd)).collect();
    let mut grads = p.zeros_like();
    let d_q = crate::seq2seq::attend_backward(&memory, &cache, &p, &r[0], &mut d_enc, &mut grads)?;
    let mut analytic: Vec<Vec<T>> = d_enc.into_iter().map(Tensor::into_data).collect();
    analytic.push(d_q.into_data());
    analytic.extend(param_grads(&grads));
    corrupt(&mut analytic, fault);
    compare(&leaves, &analytic, eps, &loss)
}

/// The tiny unrolled model: d=2, 4x4 tile, two input frames, one output frame.
pub fn tiny_model_config() -> StackConfig {
    StackConfig {
        num_layers: 2,
        hidden_channels: 2,
        kernel_size: 3,
        input_channels: 3,
        in_len: 2,
        out_len: 1,
        attention_dim: 3,
        ..StackConfig::default()
    }
}

fn check_model<T: Scalar>(rng: &mut ChaCha8Rng, eps: T, fault: f64) -> Result<Comparison<T>> {
    let cfg = tiny_model_config();
    let mut model = Seq2Seq::<T>::zeros(&cfg)?;
    // large enough weights that attention scores differ across steps
    model.visit_mut("", &mut |name, _, v| {
        let scale = if name.starts_with("attn") { 2.0 } else { 0.5 };
        v.iter_mut().for_each(|x| *x = T::of(rng.gen_range(-scale..scale)));
    });
    let dims = [B, cfg.input_channels, HW, HW];
    let unit = |rng: &mut ChaCha8Rng| Tensor::from_fn(dims, |_, _, _, _| T::of(rng.gen_range(0.0..1.0)));
    let inputs: Vec<Tensor<T>> = (0..cfg.in_len).map(|_| unit(rng)).collect();
    let targets: Vec<Tensor<T>> = (0..cfg.out_len).map(|_| unit(rng)).collect();
    let forcing = vec![false; cfg.out_len.saturating_sub(1)];
    let mut leaves = Leaves::new();
    leaves.push_params("", &model);
    let loss = |l: &[Vec<T>]| -> Result<T> {
        let mut m = model.clone();
        load_params(&mut m, l);
        m.loss(&inputs, &targets, &forcing)
    };
    let (_, grads) = model.loss_and_grad(&inputs, &targets, &forcing)?;
    let mut analytic = param_grads(&grads);
    corrupt(&mut analytic, fault);
    compare(&leaves, &analytic, eps, &loss)
}

/// Scales every analytic gradient by `1 + fault`, standing in for a broken backward pass.
fn corrupt<T: Scalar>(analytic: &mut [Vec<T>], fault: f64) {
    if fault != 0.0 {
        let s = T::of(1.0 + fault);
        analytic.iter_mut().flatten().for_each(|v| *v *= s);
    }
}

fn run_group<T: Scalar>(group: &str, eps: T, fault: f64) -> Result<(f64, String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6ead_c0de);
    let cmp = match group {
        "vanilla" => check_vanilla(&mut rng, eps, fault),
        "convlstm" => check_convlstm(&mut rng, eps, fault),
        "nonstationary" => check_nonstationary(&mut rng, eps, fault),
        "stationary" => check_stationary(&mut rng, eps, fault),
        "cascaded" => check_cascaded(&mut rng, eps, fault),
        "attention" => check_attention(&mut rng, eps, fault),
        "model" => check_model(&mut rng, eps, fault),
        other => Err(crate::error::Error::InvalidArgument(format!("unknown gradient group {other}"))),
    }?;
    let flat = |v: &[Vec<T>]| v.concat();
    let group_err = relative_error(&flat(&cmp.analytic), &flat(&cmp.numeric));
    let (worst, worst_err) = cmp
        .names
        .iter()
        .zip(cmp.analytic.iter().zip(&cmp.numeric))
        .map(|(n, (a, b))| (n.clone(), relative_error(a, b)))
        .fold((String::new(), 0.0f64), |acc, (n, e)| if e > acc.1 || e.is_nan() { (n, e) } else { acc });
    Ok((group_err, worst, worst_err))
}

/// Checks every group in [`GRAD_GROUPS`], scoring each by the relative error
/// of its concatenated gradient. Groups named in `faulty` have their
/// analytic gradients deliberately corrupted, which must make them fail.
pub fn run_grad_checks(precision: Precision, faulty: &[&str]) -> Result<Vec<GroupReport>> {
    for f in faulty {
        if !GRAD_GROUPS.contains(f) {
            return Err(crate::error::Error::InvalidArgument(format!("unknown gradient group {f}")));
        }
    }
    GRAD_GROUPS
        .iter()
        .map(|&group| {
            let fault = if faulty.contains(&group) { 0.05 } else { 0.0 };
            let (err, worst, worst_err) = match precision {
                Precision::F32 => run_group::<f32>(group, precision.eps() as f32, fault)?,
                Precision::F64 => run_group::<f64>(group, precision.eps(), fault)?,
            };
            let tolerance = precision.tolerance();
            Ok(GroupReport {
                group,
                precision,
                rel_error: err,
                worst,
                worst_error: worst_err,
                tolerance,
                passed: err < tolerance,
            })
        })
        .collect()
}
