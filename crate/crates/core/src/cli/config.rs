use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::eval::DecayAverageConfig;
use crate::seq2seq::{StackConfig, TeacherForcingSchedule, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilingConfig {
    /// When false, whole frames are used as a single tile.
    pub enabled: bool,
    pub tile_h: usize,
    pub tile_w: usize,
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig {
            enabled: true,
            tile_h: 16,
            tile_w: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub city: String,
    /// Fractions of the generated frames; training gets the rest.
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            city: "synthetic".into(),
            val_fraction: 0.1,
            test_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Predicting-point timestamps; empty means every `point_stride`-th admissible frame.
    pub points: Vec<u32>,
    pub point_stride: usize,
    pub mean_window: usize,
    pub decay: DecayAverageConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            points: Vec::new(),
            point_stride: 1,
            mean_window: 12,
            decay: DecayAverageConfig::default(),
        }
    }
}

/// Everything a command needs, read from TOML with command-line overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data generation, initialization and training; overrides the
    /// `seed` keys of the sections below.
    pub seed: u64,
    pub out: PathBuf,
    /// Dataset manifest; defaults to `<out>/data/manifest.toml`.
    pub manifest: Option<PathBuf>,
    /// Checkpoint to write (train) or read (eval, predict); defaults to `<out>/checkpoint.gckp`.
    pub checkpoint: Option<PathBuf>,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub model: StackConfig,
    pub train: TrainConfig,
    pub teacher: TeacherForcingSchedule,
    pub tiling: TilingConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("run"),
            manifest: None,
            checkpoint: None,
            synth: SynthConfig::default(),
            split: SplitConfig::default(),
            model: StackConfig::default(),
            train: TrainConfig::default(),
            teacher: TeacherForcingSchedule::default(),
            tiling: TilingConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub tile_h: Option<usize>,
    pub tile_w: Option<usize>,
    pub in_len: Option<usize>,
    pub out_len: Option<usize>,
    pub gamma: Option<f64>,
    pub no_tiling: bool,
    pub steps: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![format!("config file: {e}")]))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Defaults, then `path` if given, then `overrides`.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.layers {
            self.model.num_layers = v;
        }
        if let Some(v) = o.hidden {
            self.model.hidden_channels = v;
        }
        if let Some(v) = o.tile_h {
            self.tiling.tile_h = v;
        }
        if let Some(v) = o.tile_w {
            self.tiling.tile_w = v;
        }
        if let Some(v) = o.in_len {
            self.model.in_len = v;
        }
        if let Some(v) = o.out_len {
            self.model.out_len = v;
        }
        if let Some(v) = o.gamma {
            self.eval.decay.gamma = v;
        }
        if o.no_tiling {
            self.tiling.enabled = false;
        }
        if let Some(v) = o.steps {
            self.train.max_steps = v;
        }
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
    }

    /// Frames per split as `(train, val, test)`.
    pub fn split_lengths(&self) -> (usize, usize, usize) {
        let n = self.synth.num_frames;
        let val = (n as f64 * self.split.val_fraction).round() as usize;
        let test = (n as f64 * self.split.test_fraction).round() as usize;
        (n.saturating_sub(val + test), val, test)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.out.join("data").join("manifest.toml"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.gckp"))
    }

    /// Every problem with the configuration, so they can be reported together.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.extend(self.synth.violations());
        v.extend(self.model.violations());
        v.extend(self.train.violations());
        v.extend(self.teacher.violations());
        v.extend(self.eval.decay.violations());
        if self.model.input_channels != crate::data::FRAME_CHANNELS {
            v.push(format!(
                "model.input_channels must be {} to match frames, got {}",
                crate::data::FRAME_CHANNELS,
                self.model.input_channels
            ));
        }
        if self.tiling.enabled {
            if self.tiling.tile_h == 0 || self.tiling.tile_w == 0 {
                v.push("tiling.tile_h and tiling.tile_w must be positive".into());
            } else if self.tiling.tile_h > 2 * self.synth.height || self.tiling.tile_w > 2 * self.synth.width {
                v.push(format!(
                    "tile {}x{} exceeds twice the frame {}x{}",
                    self.tiling.tile_h, self.tiling.tile_w, self.synth.height, self.synth.width
                ));
            }
        }
        if self.eval.point_stride == 0 {
            v.push("eval.point_stride must be positive".into());
        }
        if self.eval.mean_window == 0 {
            v.push("eval.mean_window must be at least 1".into());
        }
        let fractions = [self.split.val_fraction, self.split.test_fraction];
        if fractions.iter().any(|f| !(0.0..1.0).contains(f)) || fractions.iter().sum::<f64>() >= 1.0 {
            v.push(format!(
                "split fractions must lie in [0, 1) and sum below 1, got val {} test {}",
                self.split.val_fraction, self.split.test_fraction
            ));
        }
        v
    }

    /// `violations` plus split lengths, which `gen` needs long enough for windows.
    pub fn gen_violations(&self) -> Vec<String> {
        let mut v = self.violations();
        let span = self.model.in_len + self.model.out_len;
        let history = span.max(self.eval.mean_window + self.model.out_len).max(self.eval.decay.window + self.model.out_len);
        if self.synth.num_frames < span {
            v.push(format!(
                "synth.num_frames = {} is below in_len + out_len = {span}",
                self.synth.num_frames
            ));
        } else {
            let (train, val, test) = self.split_lengths();
            if train < span {
                v.push(format!("training split has {train} frames, needs at least in_len + out_len = {span}"));
            }
            for (name, n) in [("validation", val), ("test", test)] {
                if n > 0 && n < history {
                    v.push(format!("{name} split has {n} frames, needs at least {history} for evaluation"));
                }
            }
        }
        v
    }
}

pub(crate) fn check(violations: Vec<String>) -> Result<()> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(violations))
    }
}
