use serde::{Deserialize, Serialize};

use crate::params::Parameters;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// Applies one update. Moments are kept in 64-bit.
    pub fn step<T: Scalar, P: Parameters<T>>(&mut self, params: &mut P, grads: &P) {
        let g = grads.flatten();
        match self {
            Optimizer::Sgd { lr } => {
                let lr = *lr;
                let mut at = 0;
                params.visit_mut("", &mut |_, _, w| {
                    for (p, gi) in w.iter_mut().zip(&g[at..]) {
                        *p = T::of(p.as_f64() - lr * gi.as_f64());
                    }
                    at += w.len();
                });
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                m,
                v,
                t,
            } => {
                if m.len() != g.len() {
                    *m = vec![0.0; g.len()];
                    *v = vec![0.0; g.len()];
                }
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                let mut at = 0;
                params.visit_mut("", &mut |_, _, w| {
                    for (j, p) in w.iter_mut().enumerate() {
                        let i = at + j;
                        let gi = g[i].as_f64();
                        m[i] = *beta1 * m[i] + (1.0 - *beta1) * gi;
                        v[i] = *beta2 * v[i] + (1.0 - *beta2) * gi * gi;
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        *p = T::of(p.as_f64() - *lr * mhat / (vhat.sqrt() + *eps));
                    }
                    at += w.len();
                });
            }
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Scalar, P: Parameters<T>>(grads: &mut P, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    grads.visit("", &mut |_, _, g| {
        sq += g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
    });
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = T::of(max_norm / norm);
        grads.visit_mut("", &mut |_, _, g| g.iter_mut().for_each(|v| *v *= s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::ConvKernel;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ConvKernel::<f64>::zeros(1, 1, 1);
        let mut g = p.clone();
        g.weight.data_mut()[0] = 3.0;
        g.bias[0] = -0.5;
        let mut opt = Optimizer::adam(1e-3, 0.9, 0.999, 1e-8);
        opt.step(&mut p, &g);
        assert!((p.weight.data()[0] + 1e-3).abs() < 1e-9);
        assert!((p.bias[0] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn sgd_step() {
        let mut p = ConvKernel::<f32>::zeros(1, 1, 1);
        let mut g = p.clone();
        g.bias[0] = 2.0;
        Optimizer::sgd(0.1).step(&mut p, &g);
        assert!((p.bias[0] + 0.2).abs() < 1e-7);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = ConvKernel::<f64>::zeros(1, 1, 1);
        g.weight.data_mut()[0] = 3.0;
        g.bias[0] = 4.0;
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g.weight.data()[0] - 0.6).abs() < 1e-12);
        assert!((g.bias[0] - 0.8).abs() < 1e-12);
    }
}
