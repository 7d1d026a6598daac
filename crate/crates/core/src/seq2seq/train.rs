use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Seq2Seq;
use super::optim::{clip_global_norm, Optimizer, OptimizerKind};
use super::schedule::TeacherForcingSchedule;
use crate::data::{make_batches, TiledDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Steps per loss-log row.
    pub log_every: usize,
    /// Global gradient-norm limit; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 4,
            max_steps: 2000,
            seed: 0,
            log_every: 10,
            clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            v.push(format!("train.lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            v.push(format!(
                "train.beta1/beta2 must lie in [0, 1), got {}/{}",
                self.beta1, self.beta2
            ));
        }
        if !(self.epsilon > 0.0) {
            v.push(format!("train.epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            v.push("train.batch_size must be positive".into());
        }
        if self.log_every == 0 {
            v.push("train.log_every must be positive".into());
        }
        if !(self.clip_norm >= 0.0) {
            v.push(format!("train.clip_norm must be non-negative, got {}", self.clip_norm));
        }
        v
    }

    pub fn optimizer(&self) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Sgd => Optimizer::sgd(self.lr),
            OptimizerKind::Adam => Optimizer::adam(self.lr, self.beta1, self.beta2, self.epsilon),
        }
    }
}

/// Optimizer state and the forcing-decision stream for one training run.
pub struct Trainer {
    pub model: Seq2Seq<f32>,
    pub config: TrainConfig,
    pub schedule: TeacherForcingSchedule,
    optimizer: Optimizer,
    rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    pub fn new(model: Seq2Seq<f32>, config: TrainConfig, schedule: TeacherForcingSchedule) -> Result<Self> {
        let mut v = config.violations();
        v.extend(schedule.violations());
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        Ok(Trainer {
            model,
            optimizer: config.optimizer(),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_f0c1),
            schedule,
            config,
            step: 0,
        })
    }

    /// Steps completed so far.
    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Draws forcing flags, computes loss and gradients, and updates the
    /// parameters. Returns the loss before the update.
    pub fn train_step(&mut self, inputs: &[Tensor4], targets: &[Tensor4]) -> Result<f64> {
        let p = self.schedule.probability(self.step);
        let flags: Vec<bool> = (1..targets.len()).map(|_| self.rng.gen::<f64>() < p).collect();
        let (loss, mut grads) = self.model.loss_and_grad(inputs, targets, &flags)?;
        let loss = loss as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step, loss });
        }
        if self.config.clip_norm > 0.0 {
            let norm = clip_global_norm(&mut grads, self.config.clip_norm);
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss { step: self.step, loss: norm });
            }
        }
        self.optimizer.step(&mut self.model, &grads);
        self.step += 1;
        Ok(loss)
    }
}

/// Result of [`train`]: the final model, every step's loss, and the logged
/// `(step, mean loss over the interval)` rows.
pub struct TrainOutcome {
    pub model: Seq2Seq<f32>,
    pub losses: Vec<f64>,
    pub log: Vec<(usize, f64)>,
}

/// Seed of the batch order for `epoch`.
pub fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    seed.wrapping_add(epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Runs `config.max_steps` optimizer steps over same-tile batches, reshuffling
/// each epoch. `on_log` sees each logged row as it is produced.
pub fn train(
    dataset: &TiledDataset,
    model: Seq2Seq<f32>,
    config: &TrainConfig,
    schedule: &TeacherForcingSchedule,
    mut on_log: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let (in_len, out_len) = (model.config.in_len, model.config.out_len);
    let mut trainer = Trainer::new(model, config.clone(), schedule.clone())?;
    let mut losses = Vec::with_capacity(config.max_steps);
    let mut log = Vec::new();
    let mut pending = 0.0;
    let mut epoch = 0u64;
    'outer: while losses.len() < config.max_steps {
        let stream = make_batches(dataset, in_len, out_len, config.batch_size, epoch_seed(config.seed, epoch))?;
        for batch in stream {
            if losses.len() == config.max_steps {
                break 'outer;
            }
            let loss = trainer.train_step(&batch.inputs, &batch.targets)?;
            losses.push(loss);
            pending += loss;
            let step = losses.len();
            let since = (step - 1) % config.log_every + 1;
            if since == config.log_every || step == config.max_steps {
                let row = (step, pending / since as f64);
                on_log(row.0, row.1);
                log.push(row);
                pending = 0.0;
            }
        }
        epoch += 1;
    }
    Ok(TrainOutcome {
        model: trainer.model,
        losses,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{plan_tiles, synth_generate, SynthConfig};
    use crate::seq2seq::StackConfig;

    fn setup() -> (TiledDataset, Seq2Seq<f32>) {
        let seq = synth_generate(&SynthConfig {
            height: 8,
            width: 8,
            num_frames: 12,
            num_roads: 2,
            num_blobs: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let ds = TiledDataset::new(&[seq], plan_tiles(8, 8, 4, 4).unwrap()).unwrap();
        let cfg = StackConfig {
            num_layers: 1,
            hidden_channels: 2,
            in_len: 3,
            out_len: 2,
            attention_dim: 2,
            ..StackConfig::default()
        };
        (ds, Seq2Seq::init(&cfg, 3).unwrap())
    }

    #[test]
    fn log_rows_cover_intervals() {
        let (ds, model) = setup();
        let cfg = TrainConfig {
            max_steps: 7,
            log_every: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let out = train(&ds, model, &cfg, &TeacherForcingSchedule::default(), |_, _| {}).unwrap();
        assert_eq!(out.losses.len(), 7);
        let steps: Vec<usize> = out.log.iter().map(|r| r.0).collect();
        assert_eq!(steps, vec![3, 6, 7]);
        assert!((out.log[2].1 - out.losses[6]).abs() < 1e-12);
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let (ds, model) = setup();
        let cfg = TrainConfig {
            max_steps: 5,
            ..TrainConfig::default()
        };
        let s = TeacherForcingSchedule::default();
        let a = train(&ds, model.clone(), &cfg, &s, |_, _| {}).unwrap();
        let b = train(&ds, model, &cfg, &s, |_, _| {}).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn invalid_config_is_aggregated() {
        let (_, model) = setup();
        let cfg = TrainConfig {
            lr: 0.0,
            batch_size: 0,
            ..TrainConfig::default()
        };
        match Trainer::new(model, cfg, TeacherForcingSchedule::default()) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("expected config error, got {:?}", other.err()),
        }
    }
}
