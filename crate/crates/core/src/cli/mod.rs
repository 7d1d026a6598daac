//! Command-line front end: argument parsing, run configuration and commands.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_check_grads, cmd_eval, cmd_export_heatmap, cmd_gen, cmd_predict, cmd_train, load_split, OutputLock,
    LOCK_FILE,
};
pub use config::{EvalConfig, Overrides, RunConfig, SplitConfig, TilingConfig};

use crate::error::Result;
use crate::gradcheck::Precision;

#[derive(Debug, Parser)]
#[command(name = "cascast", version, about = "Traffic frame forecasting with cascaded ConvLSTM memory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with train/val/test splits.
    Gen(Common),
    /// Train a model on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Start from the weights in this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Number of optimizer steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Score the model and the baselines on the test split.
    Eval(Common),
    /// Forecast the frames following a point of a frame file.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Frame file holding the history.
        #[arg(long)]
        input: PathBuf,
        /// Where to write the predicted frames.
        #[arg(long)]
        output: PathBuf,
        /// Timestamp of the newest observed frame; defaults to the last frame.
        #[arg(long)]
        at: Option<u32>,
        /// Also write heatmaps with this path prefix.
        #[arg(long)]
        heatmaps: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences.
    CheckGrads {
        #[arg(long, value_enum, default_value_t = PrecisionArg::Both)]
        precision: PrecisionArg,
        /// Corrupt the backward pass of a group.
        #[arg(long, hide = true)]
        inject_fault: Vec<String>,
    },
    /// Write frames of a frame file as PGM heatmaps.
    ExportHeatmap {
        #[arg(long)]
        input: PathBuf,
        /// Frame file to diff against, aligned by index.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        prefix: PathBuf,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
    Both,
}

impl PrecisionArg {
    pub fn precisions(self) -> Vec<Precision> {
        match self {
            PrecisionArg::F32 => vec![Precision::F32],
            PrecisionArg::F64 => vec![Precision::F64],
            PrecisionArg::Both => vec![Precision::F32, Precision::F64],
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub tile_h: Option<usize>,
    #[arg(long)]
    pub tile_w: Option<usize>,
    #[arg(long)]
    pub in_len: Option<usize>,
    #[arg(long)]
    pub out_len: Option<usize>,
    /// Decay factor of the decay-average baseline.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Treat each whole frame as one tile.
    #[arg(long)]
    pub no_tiling: bool,
}

impl Common {
    pub fn overrides(&self, steps: Option<usize>) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            layers: self.layers,
            hidden: self.hidden,
            tile_h: self.tile_h,
            tile_w: self.tile_w,
            in_len: self.in_len,
            out_len: self.out_len,
            gamma: self.gamma,
            no_tiling: self.no_tiling,
            steps,
        }
    }

    pub fn resolve(&self, steps: Option<usize>) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.overrides(steps))
    }
}

/// Runs a parsed command. `Ok(false)` means the command ran but reported failure.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen(c) => cmd_gen(&c.resolve(None)?).map(|_| true),
        Command::Train { common, resume, steps } => {
            cmd_train(&common.resolve(steps)?, resume.as_deref()).map(|_| true)
        }
        Command::Eval(c) => cmd_eval(&c.resolve(None)?).map(|_| true),
        Command::Predict {
            common,
            input,
            output,
            at,
            heatmaps,
        } => cmd_predict(&common.resolve(None)?, &input, &output, at, heatmaps.as_deref()).map(|_| true),
        Command::CheckGrads {
            precision,
            inject_fault,
        } => {
            let faults: Vec<&str> = inject_fault.iter().map(String::as_str).collect();
            cmd_check_grads(&precision.precisions(), &faults)
        }
        Command::ExportHeatmap {
            input,
            reference,
            prefix,
            start,
            count,
        } => cmd_export_heatmap(&input, reference.as_deref(), &prefix, start, count).map(|_| true),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
