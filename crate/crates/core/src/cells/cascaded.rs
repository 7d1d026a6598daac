use super::gates::{split_gates, stack_gates, GateParams};
use super::{CellFlavor, CellParams};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Scalar> ConvLstmState<T> {
    pub fn zeros(batch: usize, hidden: usize, height: usize, width: usize) -> Self {
        let dims = [batch, hidden, height, width];
        ConvLstmState {
            h: Tensor::zeros(dims),
            c: Tensor::zeros(dims),
        }
    }
}

/// Recurrent state of one cascaded layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadedState<T> {
    pub h: Tensor<T>,
    /// Outer temporal memory.
    pub c: Tensor<T>,
    /// Non-stationary module memory.
    pub n: Tensor<T>,
    /// Stationary module memory.
    pub s: Tensor<T>,
    /// Input seen at the previous step. `None` at sequence start, which makes
    /// the first difference zero.
    pub prev_input: Option<Tensor<T>>,
}

impl<T: Scalar> CascadedState<T> {
    pub fn zeros(batch: usize, hidden: usize, height: usize, width: usize) -> Self {
        let dims = [batch, hidden, height, width];
        CascadedState {
            h: Tensor::zeros(dims),
            c: Tensor::zeros(dims),
            n: Tensor::zeros(dims),
            s: Tensor::zeros(dims),
            prev_input: None,
        }
    }

    pub fn sample(&self, b: usize) -> Self {
        CascadedState {
            h: self.h.sample_tensor(b),
            c: self.c.sample_tensor(b),
            n: self.n.sample_tensor(b),
            s: self.s.sample_tensor(b),
            prev_input: self.prev_input.as_ref().map(|p| p.sample_tensor(b)),
        }
    }
}

/// Gradient with respect to each component of a [`CascadedState`].
#[derive(Clone, Debug)]
pub struct StateGrad<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    pub n: Tensor<T>,
    pub s: Tensor<T>,
    pub prev: Option<Tensor<T>>,
}

impl<T: Scalar> StateGrad<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        StateGrad {
            h: Tensor::zeros(dims),
            c: Tensor::zeros(dims),
            n: Tensor::zeros(dims),
            s: Tensor::zeros(dims),
            prev: None,
        }
    }
}

fn zip3<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    op: &'static str,
    f: impl Fn(T, T, T) -> T,
) -> Result<Tensor<T>> {
    a.check_same(b, op)?;
    a.check_same(c, op)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::new(a.dims(), data)
}

/// Intermediates of one gated memory transition.
#[derive(Clone, Debug)]
pub struct ModuleCache<T> {
    input: Option<Tensor<T>>,
    rec: Tensor<T>,
    mem_prev: Tensor<T>,
    acts: Tensor<T>,
    gates: Vec<Tensor<T>>,
    tanh_mem: Tensor<T>,
}

/// `m' = f * m + i * u`, output `o * tanh(m')`, gates from `(input, rec)`.
pub(crate) fn module_forward<T: Scalar>(
    p: &GateParams<T>,
    input: Option<&Tensor<T>>,
    rec: &Tensor<T>,
    mem_prev: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, ModuleCache<T>)> {
    if p.gates() != 4 {
        return Err(Error::InvalidArgument(format!(
            "memory module needs 4 gates, has {}",
            p.gates()
        )));
    }
    rec.check_same(mem_prev, "memory module state")?;
    let acts = p.forward(input, rec)?;
    let gates = split_gates(&acts, p.hidden())?;
    let (u, i, f, o) = (&gates[0], &gates[1], &gates[2], &gates[3]);
    let mem_new = zip3(f, mem_prev, &i.hadamard(u)?, "memory update", |f, m, iu| f * m + iu)?;
    let tanh_mem = mem_new.tanh();
    let out = o.hadamard(&tanh_mem)?;
    let cache = ModuleCache {
        input: input.cloned(),
        rec: rec.clone(),
        mem_prev: mem_prev.clone(),
        acts,
        gates,
        tanh_mem,
    };
    Ok((out, mem_new, cache))
}

/// Returns `(d_input, d_rec, d_mem_prev)`.
pub(crate) fn module_backward<T: Scalar>(
    p: &GateParams<T>,
    cache: &ModuleCache<T>,
    d_out: &Tensor<T>,
    d_mem_new: &Tensor<T>,
    grads: &mut GateParams<T>,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>)> {
    let g = &cache.gates;
    let (u, i, f, o) = (&g[0], &g[1], &g[2], &g[3]);
    let d_o = d_out.hadamard(&cache.tanh_mem)?;
    let through_tanh = zip3(d_out, o, &cache.tanh_mem, "module tanh", |g, o, t| {
        g * o * (T::one() - t * t)
    })?;
    let dm = d_mem_new.add(&through_tanh)?;
    let d_f = dm.hadamard(&cache.mem_prev)?;
    let d_mem_prev = dm.hadamard(f)?;
    let d_i = dm.hadamard(u)?;
    let d_u = dm.hadamard(i)?;
    let d_acts = stack_gates(&[d_u, d_i, d_f, d_o])?;
    let (d_input, d_rec) = p.backward(cache.input.as_ref(), &cache.rec, &cache.acts, &d_acts, grads)?;
    Ok((d_input, d_rec, d_mem_prev))
}

fn expect_flavor<T>(params: &CellParams<T>, flavor: CellFlavor) -> Result<()> {
    if params.flavor != flavor {
        return Err(Error::InvalidArgument(format!(
            "expected {flavor:?} cell parameters, got {:?}",
            params.flavor
        )));
    }
    Ok(())
}

pub fn convlstm_step<T: Scalar>(
    x: &Tensor<T>,
    state: &ConvLstmState<T>,
    params: &CellParams<T>,
) -> Result<ConvLstmState<T>> {
    expect_flavor(params, CellFlavor::ConvLstm)?;
    let (h, c, _) = module_forward(&params.outer, Some(x), &state.h, &state.c)?;
    Ok(ConvLstmState { h, c })
}

/// Non-stationary module: gated transition driven by `h_below_now - h_below_prev`.
/// Returns `(diff_out, n_new)`.
pub fn nonstationary_step<T: Scalar>(
    h_below_now: &Tensor<T>,
    h_below_prev: &Tensor<T>,
    n_prev: &Tensor<T>,
    params: &GateParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let delta = h_below_now.sub(h_below_prev)?;
    let (out, n_new, _) = module_forward(params, Some(&delta), n_prev, n_prev)?;
    Ok((out, n_new))
}

/// Stationary module: gated transition of `s_prev` driven by `diff`, with the outer
/// memory `c_prev` as the recurrent stream. Returns `(t_out, s_new)`.
pub fn stationary_step<T: Scalar>(
    diff: &Tensor<T>,
    c_prev: &Tensor<T>,
    s_prev: &Tensor<T>,
    params: &GateParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (out, s_new, _) = module_forward(params, Some(diff), c_prev, s_prev)?;
    Ok((out, s_new))
}

/// One cascaded-memory step. `h_below_prev = None` means a zero difference input.
pub fn cascaded_cell_step<T: Scalar>(
    x: &Tensor<T>,
    h_below_prev: Option<&Tensor<T>>,
    state: &CascadedState<T>,
    params: &CellParams<T>,
) -> Result<CascadedState<T>> {
    expect_flavor(params, CellFlavor::Cascaded)?;
    let mut st = state.clone();
    st.prev_input = h_below_prev.cloned();
    Ok(cell_forward(params, x, &st)?.0)
}

#[derive(Clone, Debug)]
pub struct CascadedCache<T> {
    x: Tensor<T>,
    h_prev: Tensor<T>,
    outer_acts: Tensor<T>,
    outer_gates: Vec<Tensor<T>>,
    nonstat: ModuleCache<T>,
    stat: ModuleCache<T>,
    tanh_c: Tensor<T>,
}

#[derive(Clone, Debug)]
pub enum CellCache<T> {
    ConvLstm(ModuleCache<T>),
    Cascaded(Box<CascadedCache<T>>),
}

fn check_state<T: Scalar>(params: &CellParams<T>, x: &Tensor<T>, state: &CascadedState<T>) -> Result<()> {
    let [b, _, h, w] = x.dims();
    let expected = [b, params.hidden(), h, w];
    for t in [&state.h, &state.c, &state.n, &state.s] {
        if t.dims() != expected {
            return Err(Error::shape("cell state", &expected, &t.dims()));
        }
    }
    if x.channels() != params.in_channels() {
        return Err(Error::shape(
            "cell input",
            &x.dims(),
            &params.outer.input_kernel.dims(),
        ));
    }
    if let Some(p) = &state.prev_input {
        x.check_same(p, "cell previous input")?;
    }
    Ok(())
}

/// Runs one step of either flavor and keeps what the backward pass needs.
pub(crate) fn cell_forward<T: Scalar>(
    params: &CellParams<T>,
    x: &Tensor<T>,
    state: &CascadedState<T>,
) -> Result<(CascadedState<T>, CellCache<T>)> {
    check_state(params, x, state)?;
    match params.flavor {
        CellFlavor::ConvLstm => {
            let (h, c, cache) = module_forward(&params.outer, Some(x), &state.h, &state.c)?;
            let next = CascadedState {
                h,
                c,
                n: state.n.clone(),
                s: state.s.clone(),
                prev_input: None,
            };
            Ok((next, CellCache::ConvLstm(cache)))
        }
        CellFlavor::Cascaded => {
            let outer_acts = params.outer.forward(Some(x), &state.h)?;
            let outer_gates = split_gates(&outer_acts, params.hidden())?;
            let (u, i, o) = (&outer_gates[0], &outer_gates[1], &outer_gates[2]);
            let delta = match &state.prev_input {
                Some(prev) => Some(x.sub(prev)?),
                None => None,
            };
            let (diff, n, nonstat) =
                module_forward(params.nonstationary()?, delta.as_ref(), &state.n, &state.n)?;
            let (t_out, s, stat) = module_forward(params.stationary()?, Some(&diff), &state.c, &state.s)?;
            let c = zip3(&t_out, i, u, "cascaded memory", |t, i, u| t + i * u)?;
            let tanh_c = c.tanh();
            let h = o.hadamard(&tanh_c)?;
            let next = CascadedState {
                h,
                c,
                n,
                s,
                prev_input: Some(x.clone()),
            };
            let cache = CascadedCache {
                x: x.clone(),
                h_prev: state.h.clone(),
                outer_acts,
                outer_gates,
                nonstat,
                stat,
                tanh_c,
            };
            Ok((next, CellCache::Cascaded(Box::new(cache))))
        }
    }
}

/// Backward of [`cell_forward`]. Accumulates parameter gradients into `grads`
/// and returns `(d_x, d_state_prev)`.
pub(crate) fn cell_backward<T: Scalar>(
    params: &CellParams<T>,
    cache: &CellCache<T>,
    d_next: &StateGrad<T>,
    grads: &mut CellParams<T>,
) -> Result<(Tensor<T>, StateGrad<T>)> {
    match cache {
        CellCache::ConvLstm(mc) => {
            let (d_x, d_h, d_c) = module_backward(&params.outer, mc, &d_next.h, &d_next.c, &mut grads.outer)?;
            let mut d_x = d_x.expect("convlstm input is always present");
            if let Some(dp) = &d_next.prev {
                d_x.add_assign(dp)?;
            }
            let d_prev = StateGrad {
                h: d_h,
                c: d_c,
                n: d_next.n.clone(),
                s: d_next.s.clone(),
                prev: None,
            };
            Ok((d_x, d_prev))
        }
        CellCache::Cascaded(cc) => {
            let g = &cc.outer_gates;
            let (u, i, o) = (&g[0], &g[1], &g[2]);
            let d_o = d_next.h.hadamard(&cc.tanh_c)?;
            let through_tanh = zip3(&d_next.h, o, &cc.tanh_c, "cascaded tanh", |g, o, t| {
                g * o * (T::one() - t * t)
            })?;
            let dc = d_next.c.add(&through_tanh)?;
            let d_u = dc.hadamard(i)?;
            let d_i = dc.hadamard(u)?;

            let stat_grads = grads.stationary.as_mut().expect("cascaded grads");
            let (d_diff, d_c_prev, d_s_prev) =
                module_backward(params.stationary()?, &cc.stat, &dc, &d_next.s, stat_grads)?;
            let d_diff = d_diff.expect("stationary input is always present");

            let ns_grads = grads.nonstationary.as_mut().expect("cascaded grads");
            let (d_delta, d_n_rec, d_n_mem) =
                module_backward(params.nonstationary()?, &cc.nonstat, &d_diff, &d_next.n, ns_grads)?;
            let d_n_prev = d_n_rec.add(&d_n_mem)?;

            let d_outer = stack_gates(&[d_u, d_i, d_o])?;
            let (d_x, d_h_prev) = params.outer.backward(
                Some(&cc.x),
                &cc.h_prev,
                &cc.outer_acts,
                &d_outer,
                &mut grads.outer,
            )?;
            let mut d_x = d_x.expect("outer input is always present");
            if let Some(dp) = &d_next.prev {
                d_x.add_assign(dp)?;
            }
            let prev = match d_delta {
                Some(dd) => {
                    d_x.add_assign(&dd)?;
                    Some(dd.map(|v| -v))
                }
                None => None,
            };
            let d_prev = StateGrad {
                h: d_h_prev,
                c: d_c_prev,
                n: d_n_prev,
                s: d_s_prev,
                prev,
            };
            Ok((d_x, d_prev))
        }
    }
}
