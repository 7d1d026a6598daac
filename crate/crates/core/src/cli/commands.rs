use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{check, RunConfig};
use crate::data::{
    load_frames, plan_tiles, save_frames, synth_generate, FrameSequence, Manifest,
    ManifestEntry, Split, TileGrid, TiledDataset,
};
use crate::error::{Error, Result};
use crate::eval::{admissible_points, evaluate_sequences, forecast, Baseline, BaselinePredictor, ModelPredictor, Predictor};
use crate::gradcheck::{run_grad_checks, Precision};
use crate::heatmap::export_heatmaps;
use crate::seq2seq::{load_checkpoint, save_checkpoint, train, Seq2Seq};
use crate::tensor::Tensor4;

pub const LOCK_FILE: &str = ".cascast.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::InvalidArgument(format!(
                "{} is in use by another run; remove {} if that run is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn echo_config(cfg: &RunConfig, command: &str) -> Result<()> {
    write_file(&cfg.out.join(format!("{command}.config.toml")), cfg.to_toml())
}

/// Frame sequences of `split` listed in the configured manifest.
pub fn load_split(cfg: &RunConfig, split: Split) -> Result<Vec<FrameSequence>> {
    let manifest_path = cfg.manifest_path();
    let manifest = Manifest::load(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let seqs = manifest
        .paths(split, base)
        .iter()
        .map(|p| load_frames(p))
        .collect::<Result<Vec<_>>>()?;
    if seqs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} lists no {} data",
            manifest_path.display(),
            split.name()
        )));
    }
    let (h, w) = (seqs[0].height, seqs[0].width);
    if let Some(s) = seqs.iter().find(|s| (s.height, s.width) != (h, w)) {
        return Err(Error::shape("load_split", &[h, w], &[s.height, s.width]));
    }
    Ok(seqs)
}

fn grid_for(cfg: &RunConfig, height: usize, width: usize) -> Result<TileGrid> {
    if cfg.tiling.enabled {
        plan_tiles(height, width, cfg.tiling.tile_h, cfg.tiling.tile_w)
    } else {
        TileGrid::whole(height, width)
    }
}

fn load_model(cfg: &RunConfig, path: &Path) -> Result<Seq2Seq<f32>> {
    let model = load_checkpoint(path)?;
    if model.config != cfg.model {
        return Err(Error::CheckpointMismatch(format!(
            "{} holds {:?}, configuration asks for {:?}",
            path.display(),
            model.config,
            cfg.model
        )));
    }
    Ok(model)
}

/// Generates the synthetic dataset and writes `data/{train,val,test}.trf` and
/// `data/manifest.toml` under the output directory.
pub fn cmd_gen(cfg: &RunConfig) -> Result<Manifest> {
    check(cfg.gen_violations())?;
    let _lock = OutputLock::acquire(&cfg.out)?;
    echo_config(cfg, "gen")?;
    let seq = synth_generate(&cfg.synth)?;
    let (train, val, _) = cfg.split_lengths();
    let ranges = [(Split::Train, 0..train), (Split::Val, train..train + val), (Split::Test, train + val..seq.len())];
    let data_dir = cfg.out.join("data");
    std::fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;
    let mut manifest = Manifest::default();
    for (split, range) in ranges {
        if range.is_empty() {
            continue;
        }
        let name = PathBuf::from(format!("{}.trf", split.name()));
        save_frames(&seq.slice(range), &data_dir.join(&name))?;
        manifest.entries.push(ManifestEntry {
            city: cfg.split.city.clone(),
            path: name,
            split,
        });
    }
    manifest.save(&data_dir.join("manifest.toml"))?;
    eprintln!(
        "wrote {} frames of {}x{} to {}",
        seq.len(),
        seq.height,
        seq.width,
        data_dir.display()
    );
    Ok(manifest)
}

/// Trains on the training split, writing `loss.csv` and the checkpoint.
/// Returns the per-step losses.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<Vec<f64>> {
    check(cfg.violations())?;
    let _lock = OutputLock::acquire(&cfg.out)?;
    echo_config(cfg, "train")?;
    let seqs = load_split(cfg, Split::Train)?;
    let grid = grid_for(cfg, seqs[0].height, seqs[0].width)?;
    let dataset = TiledDataset::new(&seqs, grid)?;
    let model = match resume {
        Some(p) => load_model(cfg, p)?,
        None => Seq2Seq::init(&cfg.model, cfg.seed)?,
    };
    let started = std::time::Instant::now();
    let outcome = train(&dataset, model, &cfg.train, &cfg.teacher, |step, loss| {
        eprintln!(
            "step {step:>6}  loss {loss:.6}  {:.0}s",
            started.elapsed().as_secs_f64()
        )
    })?;
    let mut csv = String::from("step,loss\n");
    for (k, l) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", k + 1));
    }
    write_file(&cfg.out.join("loss.csv"), csv)?;
    let path = cfg.checkpoint_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&outcome.model, &path)?;
    eprintln!("saved {}", path.display());
    Ok(outcome.losses)
}

/// Scores the model and the three baselines on the test split at shared
/// predicting points and writes `eval/{predictor}.txt`. Returns the reports
/// in the order model, persistence, mean, decay.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<crate::eval::EvalReport>> {
    check(cfg.violations())?;
    let model = load_model(cfg, &cfg.checkpoint_path())?;
    let seqs = load_split(cfg, Split::Test)?;
    let _lock = OutputLock::acquire(&cfg.out)?;
    echo_config(cfg, "eval")?;
    let grid = grid_for(cfg, seqs[0].height, seqs[0].width)?;
    let out_len = cfg.model.out_len;
    let predictors: Vec<Box<dyn Predictor>> = vec![
        Box::new(ModelPredictor::new(model)),
        Box::new(BaselinePredictor::from(Baseline::Persistence)),
        Box::new(BaselinePredictor::from(Baseline::Mean {
            window: cfg.eval.mean_window,
        })),
        Box::new(BaselinePredictor::from(Baseline::Decay(cfg.eval.decay.clone()))),
    ];
    let history = predictors.iter().map(|p| p.history_len()).max().unwrap_or(1);
    let points: Vec<Vec<u32>> = seqs
        .iter()
        .map(|s| {
            if cfg.eval.points.is_empty() {
                admissible_points(s, history, out_len, cfg.eval.point_stride)
            } else {
                cfg.eval.points.clone()
            }
        })
        .collect();
    let parts: Vec<(&FrameSequence, &[u32])> = seqs.iter().zip(&points).map(|(s, p)| (s, p.as_slice())).collect();
    let mut reports = Vec::new();
    for predictor in &predictors {
        let report = evaluate_sequences(predictor.as_ref(), &parts, &grid, out_len)?;
        write_file(&cfg.out.join("eval").join(format!("{}.txt", report.predictor)), report.to_text())?;
        println!(
            "{:<12} mse {:.6}  horizons {:?}",
            report.predictor,
            report.overall_mse,
            report.horizon_mse.iter().map(|m| format!("{m:.6}")).collect::<Vec<_>>()
        );
        reports.push(report);
    }
    Ok(reports)
}

/// Forecasts the `out_len` frames after timestamp `at` (default: the last
/// frame) of `input` and writes them to `output` as a frame file.
pub fn cmd_predict(
    cfg: &RunConfig,
    input: &Path,
    output: &Path,
    at: Option<u32>,
    heatmaps: Option<&Path>,
) -> Result<FrameSequence> {
    check(cfg.violations())?;
    let model = load_model(cfg, &cfg.checkpoint_path())?;
    let seq = load_frames(input)?;
    if seq.is_empty() {
        return Err(Error::Empty("input frames"));
    }
    let t = match at {
        Some(ts) => seq
            .index_of(ts)
            .ok_or_else(|| Error::InvalidArgument(format!("{ts} is not a frame timestamp of {}", input.display())))?,
        None => seq.len() - 1,
    };
    let grid = grid_for(cfg, seq.height, seq.width)?;
    let out = forecast(&model, &seq, t, &grid)?;
    if let Some(dir) = output.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_frames(&out, output)?;
    if let Some(prefix) = heatmaps {
        if let Some(dir) = prefix.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let predicted: Vec<Tensor4> = out.frames.iter().map(|f| f.pixels.clone()).collect();
        let truth: Option<Vec<Tensor4>> =
            (t + out.len() < seq.len()).then(|| (t + 1..=t + out.len()).map(|k| seq.pixels(k).clone()).collect());
        export_heatmaps(&predicted, truth.as_deref(), prefix)?;
    }
    eprintln!("wrote {} frames to {}", out.len(), output.display());
    Ok(out)
}

/// Runs the gradient checks and prints one line per group. `Ok(false)` when
/// any group fails.
pub fn cmd_check_grads(precisions: &[Precision], faults: &[&str]) -> Result<bool> {
    let mut passed = true;
    for &p in precisions {
        for r in run_grad_checks(p, faults)? {
            println!("{r}");
            passed &= r.passed;
        }
    }
    println!("{}", if passed { "all gradient checks passed" } else { "gradient check FAILED" });
    Ok(passed)
}

/// Writes `count` frames of `input` starting at index `start` as heatmaps.
pub fn cmd_export_heatmap(
    input: &Path,
    reference: Option<&Path>,
    prefix: &Path,
    start: usize,
    count: usize,
) -> Result<Vec<PathBuf>> {
    let pick = |seq: &FrameSequence| -> Result<Vec<Tensor4>> {
        if start + count > seq.len() {
            return Err(Error::InvalidArgument(format!(
                "frames {start}..{} requested, file has {}",
                start + count,
                seq.len()
            )));
        }
        Ok((start..start + count).map(|k| seq.pixels(k).clone()).collect())
    };
    let frames = pick(&load_frames(input)?)?;
    let reference = match reference {
        Some(p) => Some(pick(&load_frames(p)?)?),
        None => None,
    };
    if let Some(dir) = prefix.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let written = export_heatmaps(&frames, reference.as_deref(), prefix)?;
    eprintln!("wrote {} images", written.len());
    Ok(written)
}
