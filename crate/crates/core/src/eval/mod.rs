//! Reference predictors and the pixel-wise MSE evaluation harness.

mod baselines;
mod harness;
mod report;

pub use baselines::{decay_average_predict, mean_predict, persistence_predict, DecayAverageConfig};
pub use harness::{
    admissible_points, evaluate, evaluate_sequences, forecast, pixelwise_mse, Baseline, BaselinePredictor, ModelPredictor, Predictor,
};
pub use report::EvalReport;
