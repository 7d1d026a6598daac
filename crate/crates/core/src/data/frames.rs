//! Frame sequences and the `TRF1` container.
//!
//! ```text
//! magic "TRF1" | version u8 = 1
//! T, C, H, W, stride_minutes, start_timestamp   (u32 little-endian each)
//! T*C*H*W bytes, T-major then C, H, W (minor)
//! ```
//!
//! Values are stored as 8-bit and held in memory normalized to `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const TRF_MAGIC: [u8; 4] = *b"TRF1";
pub const TRF_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 6 * 4;

/// Channels: 0 = speed, 1 = volume, 2 = direction.
pub const FRAME_CHANNELS: usize = 3;

/// One normalized frame, dims `(1, 3, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Minutes since epoch.
    pub timestamp: u32,
    pub pixels: Tensor4,
}

impl Frame {
    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }
}

/// Frames at a fixed stride, starting at `start_timestamp`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub start_timestamp: u32,
    pub stride_minutes: u32,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Frame>,
}

impl FrameSequence {
    /// Builds a sequence from normalized pixel tensors; timestamps follow the stride.
    pub fn from_pixels(
        start_timestamp: u32,
        stride_minutes: u32,
        height: usize,
        width: usize,
        pixels: Vec<Tensor4>,
    ) -> Result<Self> {
        if stride_minutes == 0 {
            return Err(Error::InvalidArgument("stride_minutes must be positive".into()));
        }
        let expected = [1, FRAME_CHANNELS, height, width];
        let mut frames = Vec::with_capacity(pixels.len());
        for (t, p) in pixels.into_iter().enumerate() {
            if p.dims() != expected {
                return Err(Error::shape("FrameSequence", &expected, &p.dims()));
            }
            if p.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(format!("frame {t} has values outside [0, 1]")));
            }
            frames.push(Frame {
                timestamp: start_timestamp + stride_minutes * t as u32,
                pixels: p,
            });
        }
        Ok(FrameSequence {
            start_timestamp,
            stride_minutes,
            height,
            width,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn pixels(&self, t: usize) -> &Tensor4 {
        &self.frames[t].pixels
    }

    /// Index of the frame at `timestamp`, if it lies on the stride grid.
    pub fn index_of(&self, timestamp: u32) -> Option<usize> {
        let off = timestamp.checked_sub(self.start_timestamp)?;
        if off % self.stride_minutes != 0 {
            return None;
        }
        let idx = (off / self.stride_minutes) as usize;
        (idx < self.len()).then_some(idx)
    }

    /// Contiguous sub-sequence `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> FrameSequence {
        FrameSequence {
            start_timestamp: self.start_timestamp + self.stride_minutes * range.start as u32,
            stride_minutes: self.stride_minutes,
            height: self.height,
            width: self.width,
            frames: self.frames[range].to_vec(),
        }
    }
}

/// `v / 255`.
pub fn normalize(raw: &[u8]) -> Vec<f32> {
    raw.iter().map(|&v| v as f32 / 255.0).collect()
}

/// Scales to `[0, 255]`, rounding half up and clamping.
pub fn denormalize(values: &[f32]) -> Vec<u8> {
    values
        .iter()
        .map(|&v| {
            let s = (v as f64 * 255.0 + 0.5).floor();
            if s.is_nan() {
                0
            } else {
                s.clamp(0.0, 255.0) as u8
            }
        })
        .collect()
}

pub fn frames_to_bytes(seq: &FrameSequence) -> Vec<u8> {
    let (h, w) = (seq.height, seq.width);
    let mut out = Vec::with_capacity(HEADER_LEN + seq.len() * FRAME_CHANNELS * h * w);
    out.extend_from_slice(&TRF_MAGIC);
    out.push(TRF_VERSION);
    for v in [
        seq.len() as u32,
        FRAME_CHANNELS as u32,
        h as u32,
        w as u32,
        seq.stride_minutes,
        seq.start_timestamp,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in &seq.frames {
        out.extend_from_slice(&denormalize(f.pixels.data()));
    }
    out
}

pub fn frames_from_bytes(bytes: &[u8]) -> Result<FrameSequence> {
    if bytes.len() < 4 || bytes[..4] != TRF_MAGIC {
        return Err(Error::BadMagic {
            expected: TRF_MAGIC,
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[4] != TRF_VERSION {
        return Err(Error::UnsupportedVersion {
            found: bytes[4],
            supported: TRF_VERSION,
        });
    }
    let field = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().expect("4 bytes"));
    let (t, c, h, w) = (field(0), field(1), field(2), field(3));
    let (stride, start) = (field(4), field(5));
    if c as usize != FRAME_CHANNELS {
        return Err(Error::Malformed(format!("expected {FRAME_CHANNELS} channels, header says {c}")));
    }
    let expected = [t, c, h, w]
        .iter()
        .try_fold(1u64, |a, &v| a.checked_mul(v as u64))
        .and_then(|payload| payload.checked_add(HEADER_LEN as u64))
        .unwrap_or(u64::MAX);
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after payload",
            actual - expected
        )));
    }
    let (h, w) = (h as usize, w as usize);
    let frame_len = FRAME_CHANNELS * h * w;
    let pixels = bytes[HEADER_LEN..]
        .chunks_exact(frame_len.max(1))
        .take(t as usize)
        .map(|chunk| Tensor4::new([1, FRAME_CHANNELS, h, w], normalize(chunk)))
        .collect::<Result<Vec<_>>>()?;
    if stride == 0 {
        return Err(Error::Malformed("stride_minutes is zero".into()));
    }
    FrameSequence::from_pixels(start, stride, h, w, pixels)
}

pub fn save_frames(seq: &FrameSequence, path: &Path) -> Result<()> {
    std::fs::write(path, frames_to_bytes(seq)).map_err(|e| Error::io(path, e))
}

pub fn load_frames(path: &Path) -> Result<FrameSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    frames_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_extremes_and_rounding() {
        assert_eq!(normalize(&[0, 255]), vec![0.0, 1.0]);
        assert_eq!(denormalize(&[0.5]), vec![128]);
        assert_eq!(denormalize(&[-0.2, 1.7, f32::NAN]), vec![0, 255, 0]);
    }

    #[test]
    fn denormalize_inverts_normalize_exhaustively() {
        let all: Vec<u8> = (0..=255).collect();
        assert_eq!(denormalize(&normalize(&all)), all);
    }

    #[test]
    fn empty_sequence_round_trip() {
        let seq = FrameSequence::from_pixels(0, 5, 4, 6, vec![]).unwrap();
        let bytes = frames_to_bytes(&seq);
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(frames_from_bytes(&bytes).unwrap(), seq);
    }

    #[test]
    fn header_errors_are_distinct() {
        let seq = FrameSequence::from_pixels(10, 5, 2, 2, vec![Tensor4::full([1, 3, 2, 2], 0.2)]).unwrap();
        let bytes = frames_to_bytes(&seq);
        let mut bad = bytes.clone();
        bad[3] = b'2';
        assert!(matches!(frames_from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 7;
        assert!(matches!(frames_from_bytes(&bad), Err(Error::UnsupportedVersion { found: 7, .. })));
        let short = &bytes[..bytes.len() - 5];
        match frames_from_bytes(short) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!((expected, actual), (bytes.len() as u64, short.len() as u64));
                let msg = frames_from_bytes(short).unwrap_err().to_string();
                assert!(msg.contains(&expected.to_string()) && msg.contains(&actual.to_string()));
            }
            other => panic!("expected truncation, got {other:?}"),
        }
        assert!(matches!(frames_from_bytes(&bytes[..7]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn huge_header_counts_do_not_allocate() {
        let mut bytes = frames_to_bytes(&FrameSequence::from_pixels(0, 5, 1, 1, vec![]).unwrap());
        for i in 0..4 {
            let v: u32 = if i == 1 { 3 } else { u32::MAX };
            bytes[5 + 4 * i..9 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(frames_from_bytes(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn timestamps_follow_stride() {
        let px = vec![Tensor4::zeros([1, 3, 1, 1]); 4];
        let seq = FrameSequence::from_pixels(100, 5, 1, 1, px).unwrap();
        assert_eq!(seq.frames[3].timestamp, 115);
        assert_eq!(seq.index_of(110), Some(2));
        assert_eq!(seq.index_of(111), None);
        assert_eq!(seq.index_of(120), None);
        assert_eq!(seq.slice(1..3).start_timestamp, 105);
    }
}
