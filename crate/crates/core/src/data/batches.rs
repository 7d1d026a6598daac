use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::frames::{FrameSequence, FRAME_CHANNELS};
use super::tiles::{tile_split, TileGrid};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Tensor4};

/// Frame sequences pre-cut into tiles: `tiles[seq][t][row * cols + col]`.
#[derive(Clone, Debug)]
pub struct TiledDataset {
    pub grid: TileGrid,
    tiles: Vec<Vec<Vec<Tensor4>>>,
}

/// Identifies one training window: frames `start..start + in_len + out_len`
/// of sequence `sequence`, cut at tile `tile`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowRef {
    pub tile: (usize, usize),
    pub sequence: usize,
    pub start: usize,
}

/// Same-tile mini-batch. `inputs[t]` and `targets[t]` are (B, 3, tile_h, tile_w).
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub tile: (usize, usize),
    pub inputs: Vec<Tensor4>,
    pub targets: Vec<Tensor4>,
    pub windows: Vec<WindowRef>,
}

impl TiledDataset {
    pub fn new(sequences: &[FrameSequence], grid: TileGrid) -> Result<Self> {
        let mut tiles = Vec::with_capacity(sequences.len());
        for seq in sequences {
            if (seq.height, seq.width) != (grid.frame_h, grid.frame_w) {
                return Err(Error::shape(
                    "TiledDataset",
                    &[grid.frame_h, grid.frame_w],
                    &[seq.height, seq.width],
                ));
            }
            let cut = seq
                .frames
                .iter()
                .map(|f| Ok(tile_split(&f.pixels, &grid)?.into_iter().flatten().collect()))
                .collect::<Result<Vec<Vec<_>>>>()?;
            tiles.push(cut);
        }
        Ok(TiledDataset { grid, tiles })
    }

    pub fn num_sequences(&self) -> usize {
        self.tiles.len()
    }

    pub fn sequence_len(&self, seq: usize) -> usize {
        self.tiles[seq].len()
    }

    /// Tile `(i, j)` of frame `t` in sequence `seq`, dims (1, 3, tile_h, tile_w).
    pub fn tile(&self, seq: usize, t: usize, tile: (usize, usize)) -> &Tensor4 {
        &self.tiles[seq][t][tile.0 * self.grid.cols + tile.1]
    }

    /// Every admissible window in (tile, sequence, start) order.
    pub fn windows(&self, in_len: usize, out_len: usize) -> Vec<WindowRef> {
        let span = in_len + out_len;
        let mut out = Vec::new();
        for i in 0..self.grid.rows {
            for j in 0..self.grid.cols {
                for (s, seq) in self.tiles.iter().enumerate() {
                    if seq.len() < span {
                        continue;
                    }
                    out.extend((0..=seq.len() - span).map(|start| WindowRef {
                        tile: (i, j),
                        sequence: s,
                        start,
                    }));
                }
            }
        }
        out
    }

    /// Stacks the frames of `windows` (all on one tile) into a batch.
    pub fn assemble(&self, windows: &[WindowRef], in_len: usize, out_len: usize) -> Result<SampleBatch> {
        let first = windows.first().ok_or(Error::Empty("batch windows"))?;
        if windows.iter().any(|w| w.tile != first.tile) {
            return Err(Error::InvalidArgument("batch mixes tiles".into()));
        }
        let dims = [windows.len(), FRAME_CHANNELS, self.grid.tile_h, self.grid.tile_w];
        let step = |t: usize| {
            let mut out = Tensor::zeros(dims);
            for (k, w) in windows.iter().enumerate() {
                out.sample_mut(k)
                    .copy_from_slice(self.tile(w.sequence, w.start + t, w.tile).data());
            }
            Ok(out)
        };
        Ok(SampleBatch {
            tile: first.tile,
            inputs: (0..in_len).map(step).collect::<Result<_>>()?,
            targets: (in_len..in_len + out_len).map(step).collect::<Result<_>>()?,
            windows: windows.to_vec(),
        })
    }
}

/// One epoch of same-tile batches in seeded order.
pub struct BatchStream<'a> {
    dataset: &'a TiledDataset,
    batches: Vec<Vec<WindowRef>>,
    in_len: usize,
    out_len: usize,
    next: usize,
}

impl BatchStream<'_> {
    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    /// The window plan, without materializing tensors.
    pub fn plan(&self) -> &[Vec<WindowRef>] {
        &self.batches
    }
}

impl Iterator for BatchStream<'_> {
    type Item = SampleBatch;

    fn next(&mut self) -> Option<SampleBatch> {
        let windows = self.batches.get(self.next)?;
        self.next += 1;
        Some(
            self.dataset
                .assemble(windows, self.in_len, self.out_len)
                .expect("planned windows are valid"),
        )
    }
}

/// Groups windows by tile, shuffles within each tile, chunks into batches of
/// at most `batch_size`, then shuffles the batch order.
pub fn make_batches(
    dataset: &TiledDataset,
    in_len: usize,
    out_len: usize,
    batch_size: usize,
    seed: u64,
) -> Result<BatchStream<'_>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if in_len == 0 || out_len == 0 {
        return Err(Error::InvalidArgument("in_len and out_len must be positive".into()));
    }
    let windows = dataset.windows(in_len, out_len);
    if windows.is_empty() {
        let longest = (0..dataset.num_sequences())
            .map(|s| dataset.sequence_len(s))
            .max()
            .unwrap_or(0);
        return Err(Error::InsufficientHistory {
            needed: in_len + out_len,
            available: longest,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batches = Vec::new();
    for tile_windows in windows.chunk_by(|a, b| a.tile == b.tile) {
        let mut w = tile_windows.to_vec();
        w.shuffle(&mut rng);
        batches.extend(w.chunks(batch_size).map(<[WindowRef]>::to_vec));
    }
    batches.shuffle(&mut rng);
    Ok(BatchStream {
        dataset,
        batches,
        in_len,
        out_len,
        next: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tiles::plan_tiles;

    fn dataset(frames: usize, h: usize, w: usize, tile: usize) -> TiledDataset {
        let px = (0..frames)
            .map(|t| Tensor4::from_fn([1, 3, h, w], |_, c, y, x| ((t * 7 + c * 3 + y + x) % 11) as f32 / 10.0))
            .collect();
        let seq = FrameSequence::from_pixels(0, 5, h, w, px).unwrap();
        TiledDataset::new(&[seq], plan_tiles(h, w, tile, tile).unwrap()).unwrap()
    }

    #[test]
    fn one_tile_exact_length_gives_one_window() {
        let ds = dataset(15, 4, 4, 4);
        let stream = make_batches(&ds, 12, 3, 8, 0).unwrap();
        assert_eq!(stream.num_batches(), 1);
        let b: Vec<_> = stream.collect();
        assert_eq!(b[0].inputs.len(), 12);
        assert_eq!(b[0].targets.len(), 3);
        assert_eq!(b[0].inputs[0].dims(), [1, 3, 4, 4]);
    }

    #[test]
    fn short_dataset_is_rejected() {
        let ds = dataset(14, 4, 4, 4);
        assert!(matches!(
            make_batches(&ds, 12, 3, 8, 0),
            Err(Error::InsufficientHistory { needed: 15, available: 14 })
        ));
    }

    #[test]
    fn batch_contents_match_source_tiles() {
        let ds = dataset(6, 6, 6, 3);
        for b in make_batches(&ds, 2, 1, 3, 4).unwrap() {
            for (k, w) in b.windows.iter().enumerate() {
                for t in 0..2 {
                    let src = ds.tile(0, w.start + t, w.tile);
                    assert_eq!(b.inputs[t].sample(k), src.data());
                }
                assert_eq!(b.targets[0].sample(k), ds.tile(0, w.start + 2, w.tile).data());
            }
        }
    }
}
