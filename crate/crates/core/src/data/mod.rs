//! Frames, file formats, tiling, batching and synthetic data.

mod batches;
mod frames;
mod manifest;
mod synth;
mod tiles;

pub use batches::{make_batches, BatchStream, SampleBatch, TiledDataset, WindowRef};
pub use frames::{
    denormalize, frames_from_bytes, frames_to_bytes, load_frames, normalize, save_frames, Frame,
    FrameSequence, FRAME_CHANNELS, TRF_MAGIC, TRF_VERSION,
};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use synth::{heading_value, synth_generate, Blob, Road, SynthConfig, SynthScene};
pub use tiles::{plan_tiles, tile_join, tile_split, TileGrid};
