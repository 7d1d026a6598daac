use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayAverageConfig {
    pub window: usize,
    pub gamma: f64,
}

impl Default for DecayAverageConfig {
    fn default() -> Self {
        DecayAverageConfig {
            window: 12,
            gamma: 0.9,
        }
    }
}

impl DecayAverageConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.window == 0 {
            v.push("decay.window must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            v.push(format!("decay.gamma must lie in (0, 1], got {}", self.gamma));
        }
        v
    }

    /// `w[k]` weights the frame `k` steps back from the newest; sums to 1.
    pub fn weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.window).map(|k| self.gamma.powi(k as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

fn check_history(history: &[Tensor4], needed: usize) -> Result<()> {
    if history.len() < needed.max(1) {
        return Err(Error::InsufficientHistory {
            needed: needed.max(1),
            available: history.len(),
        });
    }
    let dims = history[0].dims();
    if let Some(bad) = history.iter().find(|f| f.dims() != dims) {
        return Err(Error::shape("history", &dims, &bad.dims()));
    }
    Ok(())
}

/// Repeats the newest frame `out_len` times.
pub fn persistence_predict(history: &[Tensor4], out_len: usize) -> Result<Vec<Tensor4>> {
    check_history(history, 1)?;
    Ok(vec![history[history.len() - 1].clone(); out_len])
}

/// Weighted sum of the newest frames; `weights[k]` applies `k` steps back.
fn weighted(history: &[Tensor4], weights: &[f64], out_len: usize) -> Result<Vec<Tensor4>> {
    check_history(history, weights.len())?;
    let newest = history.len() - 1;
    let mut acc = vec![0.0f64; history[0].len()];
    for (k, &w) in weights.iter().enumerate() {
        for (a, &v) in acc.iter_mut().zip(history[newest - k].data()) {
            *a += w * v as f64;
        }
    }
    let frame = Tensor4::new(history[0].dims(), acc.into_iter().map(|v| v as f32).collect())?;
    Ok(vec![frame; out_len])
}

/// Unweighted mean of the last `k` frames, repeated `out_len` times.
pub fn mean_predict(history: &[Tensor4], k: usize, out_len: usize) -> Result<Vec<Tensor4>> {
    if k == 0 {
        return Err(Error::InvalidArgument("mean window must be at least 1".into()));
    }
    weighted(history, &vec![1.0 / k as f64; k], out_len)
}

/// Exponentially weighted average of the last `window` frames.
pub fn decay_average_predict(
    history: &[Tensor4],
    config: &DecayAverageConfig,
    out_len: usize,
) -> Result<Vec<Tensor4>> {
    let v = config.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    weighted(history, &config.weights(), out_len)
}
