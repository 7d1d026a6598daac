//! Spatiotemporal forecasting of grid-shaped traffic frames with a stacked
//! cascaded-memory ConvLSTM encoder-decoder, cross-frame additive attention and
//! tile-based mini-batching.

pub mod cells;
pub mod cli;
pub mod conv;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod heatmap;
pub mod params;
pub mod seq2seq;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor, Tensor4};
