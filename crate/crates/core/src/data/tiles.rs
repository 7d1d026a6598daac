use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Disjoint tiling of a frame zero-padded on the bottom and right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub frame_h: usize,
    pub frame_w: usize,
    pub tile_h: usize,
    pub tile_w: usize,
    pub rows: usize,
    pub cols: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

pub fn plan_tiles(frame_h: usize, frame_w: usize, tile_h: usize, tile_w: usize) -> Result<TileGrid> {
    if tile_h == 0 || tile_w == 0 {
        return Err(Error::InvalidArgument("tile dims must be positive".into()));
    }
    if frame_h == 0 || frame_w == 0 {
        return Err(Error::InvalidArgument("frame dims must be positive".into()));
    }
    if tile_h > 2 * frame_h || tile_w > 2 * frame_w {
        return Err(Error::InvalidArgument(format!(
            "tile {tile_h}x{tile_w} is more than twice the frame {frame_h}x{frame_w}"
        )));
    }
    let rows = frame_h.div_ceil(tile_h);
    let cols = frame_w.div_ceil(tile_w);
    Ok(TileGrid {
        frame_h,
        frame_w,
        tile_h,
        tile_w,
        rows,
        cols,
        pad_h: rows * tile_h - frame_h,
        pad_w: cols * tile_w - frame_w,
    })
}

impl TileGrid {
    /// A single tile covering the whole frame.
    pub fn whole(frame_h: usize, frame_w: usize) -> Result<Self> {
        plan_tiles(frame_h, frame_w, frame_h, frame_w)
    }

    pub fn num_tiles(&self) -> usize {
        self.rows * self.cols
    }

    /// Rows and columns of tile `(i, j)` that lie inside the unpadded frame.
    pub fn valid_extent(&self, i: usize, j: usize) -> (usize, usize) {
        (
            self.tile_h.min(self.frame_h - i * self.tile_h),
            self.tile_w.min(self.frame_w - j * self.tile_w),
        )
    }

    fn check(&self, t: &[usize; 4], h: usize, w: usize, op: &'static str) -> Result<()> {
        if (t[2], t[3]) != (h, w) {
            return Err(Error::shape(op, t, &[t[0], t[1], h, w]));
        }
        Ok(())
    }
}

/// Cuts `frame` (B, C, H, W) into `tiles[row][col]`, each (B, C, tile_h, tile_w).
pub fn tile_split<T: Scalar>(frame: &Tensor<T>, grid: &TileGrid) -> Result<Vec<Vec<Tensor<T>>>> {
    let dims = frame.dims();
    grid.check(&dims, grid.frame_h, grid.frame_w, "tile_split")?;
    let [b, c, _, _] = dims;
    let mut out = Vec::with_capacity(grid.rows);
    for i in 0..grid.rows {
        let mut row = Vec::with_capacity(grid.cols);
        for j in 0..grid.cols {
            let (vh, vw) = grid.valid_extent(i, j);
            let mut tile = Tensor::zeros([b, c, grid.tile_h, grid.tile_w]);
            for s in 0..b {
                for ch in 0..c {
                    for y in 0..vh {
                        let src = frame.offset(s, ch, i * grid.tile_h + y, j * grid.tile_w);
                        let dst = tile.offset(s, ch, y, 0);
                        tile.data_mut()[dst..dst + vw].copy_from_slice(&frame.data()[src..src + vw]);
                    }
                }
            }
            row.push(tile);
        }
        out.push(row);
    }
    Ok(out)
}

/// Reassembles tiles and crops the padding.
pub fn tile_join<T: Scalar>(tiles: &[Vec<Tensor<T>>], grid: &TileGrid) -> Result<Tensor<T>> {
    if tiles.len() != grid.rows || tiles.iter().any(|r| r.len() != grid.cols) {
        return Err(Error::InvalidArgument(format!(
            "tile_join: expected {}x{} tiles",
            grid.rows, grid.cols
        )));
    }
    let first = &tiles[0][0];
    let [b, c, _, _] = first.dims();
    let mut frame = Tensor::zeros([b, c, grid.frame_h, grid.frame_w]);
    for (i, row) in tiles.iter().enumerate() {
        for (j, tile) in row.iter().enumerate() {
            let dims = tile.dims();
            grid.check(&dims, grid.tile_h, grid.tile_w, "tile_join")?;
            if dims[..2] != [b, c] {
                return Err(Error::shape("tile_join", &first.dims(), &dims));
            }
            let (vh, vw) = grid.valid_extent(i, j);
            for s in 0..b {
                for ch in 0..c {
                    for y in 0..vh {
                        let src = tile.offset(s, ch, y, 0);
                        let dst = frame.offset(s, ch, i * grid.tile_h + y, j * grid.tile_w);
                        frame.data_mut()[dst..dst + vw].copy_from_slice(&tile.data()[src..src + vw]);
                    }
                }
            }
        }
    }
    Ok(frame)
}
