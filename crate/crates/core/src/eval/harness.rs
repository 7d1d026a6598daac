use super::baselines::{decay_average_predict, mean_predict, persistence_predict, DecayAverageConfig};
use super::report::EvalReport;
use crate::data::{tile_join, tile_split, FrameSequence, TileGrid};
use crate::error::{Error, Result};
use crate::seq2seq::Seq2Seq;
use crate::tensor::Tensor4;

/// Mean of squared differences over every value of every frame, accumulated in 64-bit.
pub fn pixelwise_mse(pred: &[Tensor4], target: &[Tensor4]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "mse: {} predicted frames for {} targets",
            pred.len(),
            target.len()
        )));
    }
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (p, t) in pred.iter().zip(target) {
        p.check_same(t, "mse")?;
        sum += p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>();
        n += p.len();
    }
    if n == 0 {
        return Err(Error::Empty("mse"));
    }
    Ok(sum / n as f64)
}

/// Anything that maps a batched frame history to future frames.
pub trait Predictor {
    fn name(&self) -> &str;

    /// Frames of history consumed per prediction.
    fn history_len(&self) -> usize;

    /// `history[t]` is (B, 3, H, W), oldest first; returns `out_len` frames.
    fn predict(&self, history: &[Tensor4], out_len: usize) -> Result<Vec<Tensor4>>;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Baseline {
    Persistence,
    Mean { window: usize },
    Decay(DecayAverageConfig),
}

impl Baseline {
    pub fn label(&self) -> String {
        match self {
            Baseline::Persistence => "persistence".into(),
            Baseline::Mean { window } => format!("mean{window}"),
            Baseline::Decay(_) => "decay".into(),
        }
    }
}

/// A [`Baseline`] with its report label.
pub struct BaselinePredictor {
    pub baseline: Baseline,
    name: String,
}

impl From<Baseline> for BaselinePredictor {
    fn from(baseline: Baseline) -> Self {
        BaselinePredictor {
            name: baseline.label(),
            baseline,
        }
    }
}

impl Predictor for BaselinePredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn history_len(&self) -> usize {
        match &self.baseline {
            Baseline::Persistence => 1,
            Baseline::Mean { window } => *window,
            Baseline::Decay(c) => c.window,
        }
    }

    fn predict(&self, history: &[Tensor4], out_len: usize) -> Result<Vec<Tensor4>> {
        match &self.baseline {
            Baseline::Persistence => persistence_predict(history, out_len),
            Baseline::Mean { window } => mean_predict(history, *window, out_len),
            Baseline::Decay(c) => decay_average_predict(history, c, out_len),
        }
    }
}

/// Closed-loop rollout of a trained model.
pub struct ModelPredictor {
    pub model: Seq2Seq<f32>,
    pub name: String,
}

impl ModelPredictor {
    pub fn new(model: Seq2Seq<f32>) -> Self {
        ModelPredictor {
            model,
            name: "model".into(),
        }
    }
}

impl Predictor for ModelPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn history_len(&self) -> usize {
        self.model.config.in_len
    }

    fn predict(&self, history: &[Tensor4], out_len: usize) -> Result<Vec<Tensor4>> {
        if out_len != self.model.config.out_len {
            return Err(Error::InvalidArgument(format!(
                "model predicts {} frames, {out_len} requested",
                self.model.config.out_len
            )));
        }
        self.model.predict(history)
    }
}

/// Timestamps of every `stride`-th frame that has `history` frames up to and
/// including it and `out_len` frames after it.
pub fn admissible_points(seq: &FrameSequence, history: usize, out_len: usize, stride: usize) -> Vec<u32> {
    let history = history.max(1);
    if seq.len() < history + out_len {
        return Vec::new();
    }
    (history - 1..seq.len() - out_len)
        .step_by(stride.max(1))
        .map(|t| seq.frames[t].timestamp)
        .collect()
}

/// Closed-loop forecast of the `out_len` frames after index `t` of `seq`,
/// running every tile of `grid` as one batch and stitching the result.
pub fn forecast(model: &Seq2Seq<f32>, seq: &FrameSequence, t: usize, grid: &TileGrid) -> Result<FrameSequence> {
    let in_len = model.config.in_len;
    if t >= seq.len() {
        return Err(Error::InvalidArgument(format!("frame index {t} out of range for {} frames", seq.len())));
    }
    if t + 1 < in_len {
        return Err(Error::InsufficientHistory {
            needed: in_len,
            available: t + 1,
        });
    }
    let batched: Vec<Tensor4> = (t + 1 - in_len..=t)
        .map(|k| {
            let tiles = tile_split(seq.pixels(k), grid)?;
            Tensor4::stack_batch(&tiles.into_iter().flatten().collect::<Vec<_>>())
        })
        .collect::<Result<_>>()?;
    let frames: Vec<Tensor4> = model
        .predict(&batched)?
        .iter()
        .map(|p| {
            let tiles: Vec<Vec<Tensor4>> = (0..grid.rows)
                .map(|i| (0..grid.cols).map(|j| p.sample_tensor(i * grid.cols + j)).collect())
                .collect();
            tile_join(&tiles, grid)
        })
        .collect::<Result<_>>()?;
    let start = seq.frames[t].timestamp + seq.stride_minutes;
    FrameSequence::from_pixels(start, seq.stride_minutes, seq.height, seq.width, frames)
}

/// Points per predictor call.
const CHUNK: usize = 32;

/// Runs `predictor` at each predicting point (timestamp of the newest observed
/// frame) on every tile of `grid` and scores the next `out_len` frames over
/// the unpadded frame area.
pub fn evaluate(
    predictor: &dyn Predictor,
    seq: &FrameSequence,
    points: &[u32],
    grid: &TileGrid,
    out_len: usize,
) -> Result<EvalReport> {
    evaluate_sequences(predictor, &[(seq, points)], grid, out_len)
}

/// [`evaluate`] pooled over several sequences, each with its own points.
pub fn evaluate_sequences(
    predictor: &dyn Predictor,
    parts: &[(&FrameSequence, &[u32])],
    grid: &TileGrid,
    out_len: usize,
) -> Result<EvalReport> {
    let total: usize = parts.iter().map(|(_, p)| p.len()).sum();
    if total == 0 {
        return Err(Error::Empty("predicting points"));
    }
    let (rows, cols) = (grid.rows, grid.cols);
    let mut sums = vec![vec![vec![0.0f64; cols]; rows]; out_len];
    let mut counts = vec![vec![vec![0u64; cols]; rows]; out_len];
    for (seq, points) in parts {
        accumulate(predictor, seq, points, grid, out_len, &mut sums, &mut counts)?;
    }
    Ok(EvalReport::from_sums(predictor.name(), total, &sums, &counts))
}

fn accumulate(
    predictor: &dyn Predictor,
    seq: &FrameSequence,
    points: &[u32],
    grid: &TileGrid,
    out_len: usize,
    sums: &mut [Vec<Vec<f64>>],
    counts: &mut [Vec<Vec<u64>>],
) -> Result<()> {
    if (seq.height, seq.width) != (grid.frame_h, grid.frame_w) {
        return Err(Error::shape("evaluate", &[grid.frame_h, grid.frame_w], &[seq.height, seq.width]));
    }
    let hist = predictor.history_len();
    let mut index = Vec::with_capacity(points.len());
    for &p in points {
        let t = seq
            .index_of(p)
            .ok_or_else(|| Error::InvalidArgument(format!("predicting point {p} is not a frame timestamp")))?;
        if t + 1 < hist {
            return Err(Error::InsufficientHistory {
                needed: hist,
                available: t + 1,
            });
        }
        if t + out_len >= seq.len() {
            return Err(Error::InvalidArgument(format!(
                "predicting point {p} lacks {out_len} target frames"
            )));
        }
        index.push(t);
    }
    let (rows, cols) = (grid.rows, grid.cols);
    for chunk in index.chunks(CHUNK) {
        let lo = chunk.iter().min().unwrap() + 1 - hist;
        let hi = chunk.iter().max().unwrap() + out_len;
        let tiles: Vec<Vec<Vec<Tensor4>>> =
            (lo..=hi).map(|t| tile_split(seq.pixels(t), grid)).collect::<Result<_>>()?;
        let frame = |t: usize, i: usize, j: usize| &tiles[t - lo][i][j];
        for i in 0..rows {
            for j in 0..cols {
                let batch = |t_of: &dyn Fn(usize) -> usize| {
                    let parts: Vec<Tensor4> = chunk.iter().map(|&t| frame(t_of(t), i, j).clone()).collect();
                    Tensor4::stack_batch(&parts)
                };
                let history: Vec<Tensor4> = (0..hist)
                    .map(|k| batch(&|t| t + 1 + k - hist))
                    .collect::<Result<_>>()?;
                let preds = predictor.predict(&history, out_len)?;
                if preds.len() != out_len {
                    return Err(Error::InvalidArgument(format!(
                        "{} returned {} frames, expected {out_len}",
                        predictor.name(),
                        preds.len()
                    )));
                }
                let (vh, vw) = grid.valid_extent(i, j);
                for (h, pred) in preds.iter().enumerate() {
                    let target = batch(&|t| t + 1 + h)?;
                    pred.check_same(&target, "evaluate")?;
                    let [b, c, _, _] = target.dims();
                    let mut s = 0.0f64;
                    for n in 0..b {
                        for ch in 0..c {
                            for y in 0..vh {
                                let at = target.offset(n, ch, y, 0);
                                s += pred.data()[at..at + vw]
                                    .iter()
                                    .zip(&target.data()[at..at + vw])
                                    .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                                    .sum::<f64>();
                            }
                        }
                    }
                    sums[h][i][j] += s;
                    counts[h][i][j] += (b * c * vh * vw) as u64;
                }
            }
        }
    }
    Ok(())
}
