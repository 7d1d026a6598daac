//! Encoder-decoder stack with attention, and its training loop.

mod attention;
mod checkpoint;
mod config;
mod model;
mod optim;
mod schedule;
mod train;

pub(crate) use attention::{attend, attend_backward};
pub use attention::{attention_context, attention_score, AttentionCache, AttentionParams, EncoderMemory};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::StackConfig;
pub use model::{Encoded, Seq2Seq, Trace};
pub use optim::{clip_global_norm, Optimizer, OptimizerKind};
pub use schedule::{ForcingMode, TeacherForcingSchedule};
pub use train::{epoch_seed, train, TrainConfig, TrainOutcome, Trainer};
