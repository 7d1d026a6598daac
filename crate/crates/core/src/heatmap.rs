//! Binary PGM (P5) export of frame channels.

use std::path::{Path, PathBuf};

use crate::data::denormalize;
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const CHANNEL_NAMES: [&str; 3] = ["speed", "volume", "direction"];

/// `P5` image with maxval 255.
pub fn pgm_to_bytes(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::shape("pgm", &[height, width], &[pixels.len()]));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Parses a `P5` image with maxval 255 into `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::with_capacity(4);
    let mut at = 0;
    while fields.len() < 4 {
        while at < bytes.len() && bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if at < bytes.len() && bytes[at] == b'#' {
            while at < bytes.len() && bytes[at] != b'\n' {
                at += 1;
            }
            continue;
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(Error::Malformed("pgm header ends early".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..at]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Malformed(format!("pgm magic {:?} is not P5", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Malformed(format!("pgm field {s:?}")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Malformed(format!("pgm maxval {maxval} unsupported")));
    }
    let data = &bytes[(at + 1).min(bytes.len())..];
    let expected = w.checked_mul(h).ok_or_else(|| Error::Malformed("pgm dims overflow".into()))?;
    if data.len() != expected {
        return Err(Error::Truncated {
            expected: expected as u64,
            actual: data.len() as u64,
        });
    }
    Ok((w, h, data.to_vec()))
}

fn channel_bytes(frame: &Tensor4, c: usize) -> Vec<u8> {
    let plane = frame.plane_len();
    denormalize(&frame.sample(0)[c * plane..(c + 1) * plane])
}

/// Writes one image per channel per frame as `{prefix}_t{k}_{channel}.pgm`,
/// plus `{prefix}_t{k}_{channel}_diff.pgm` holding `|frame - reference|`
/// when a reference sequence is given. Frames are (1, 3, H, W).
pub fn export_heatmaps(frames: &[Tensor4], reference: Option<&[Tensor4]>, prefix: &Path) -> Result<Vec<PathBuf>> {
    if let Some(r) = reference {
        if r.len() != frames.len() {
            return Err(Error::InvalidArgument(format!(
                "{} frames but {} reference frames",
                frames.len(),
                r.len()
            )));
        }
    }
    let stem = prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = prefix.parent().unwrap_or(Path::new(""));
    let mut written = Vec::new();
    let mut write = |name: String, w: usize, h: usize, px: &[u8]| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, pgm_to_bytes(w, h, px)?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for (k, f) in frames.iter().enumerate() {
        let [b, c, h, w] = f.dims();
        if b != 1 || c != CHANNEL_NAMES.len() {
            return Err(Error::shape("export_heatmaps", &[1, 3, h, w], &f.dims()));
        }
        let diff = match reference {
            Some(r) => Some(f.zip_map(&r[k], "heatmap diff", |a, b| (a - b).abs())?),
            None => None,
        };
        for (ch, name) in CHANNEL_NAMES.iter().enumerate() {
            write(format!("{stem}_t{k}_{name}.pgm"), w, h, &channel_bytes(f, ch))?;
            if let Some(d) = &diff {
                write(format!("{stem}_t{k}_{name}_diff.pgm"), w, h, &channel_bytes(d, ch))?;
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_comments() {
        let px: Vec<u8> = (0..12).map(|v| v * 20).collect();
        let bytes = pgm_to_bytes(4, 3, &px).unwrap();
        assert_eq!(parse_pgm(&bytes).unwrap(), (4, 3, px.clone()));
        let mut with_comment = b"P5\n# made here\n4 3\n255\n".to_vec();
        with_comment.extend_from_slice(&px);
        assert_eq!(parse_pgm(&with_comment).unwrap(), (4, 3, px));
    }

    #[test]
    fn rejects_bad_images() {
        assert!(parse_pgm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(parse_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(pgm_to_bytes(2, 2, &[0; 3]).is_err());
    }
}
