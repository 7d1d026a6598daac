//! `GCKP` checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "GCKP" | version u8 = 1
//! config: num_layers, hidden_channels, kernel_size, input_channels,
//!         in_len, out_len, flavor, attention_dim        (u32 each)
//! record count u32
//! per record: name_len u32 | name bytes | ndims u32 | dims u32 * ndims | f32 * prod(dims)
//! ```

use std::collections::HashMap;
use std::path::Path;

use super::config::StackConfig;
use super::model::Seq2Seq;
use crate::cells::CellFlavor;
use crate::error::{Error, Result};
use crate::params::Parameters;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GCKP";
pub const CHECKPOINT_VERSION: u8 = 1;

pub fn checkpoint_to_bytes(model: &Seq2Seq<f32>) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::with_capacity(64 + 4 * model.num_params());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    for v in [
        c.num_layers as u32,
        c.hidden_channels as u32,
        c.kernel_size as u32,
        c.input_channels as u32,
        c.in_len as u32,
        c.out_len as u32,
        c.flavor.code(),
        c.attention_dim as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut records = Vec::new();
    model.visit("", &mut |name, dims, values| {
        records.push((name.to_string(), dims.to_vec(), values.to_vec()));
    });
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, dims, values) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                expected: (self.at as u64).saturating_add(n as u64),
                actual: self.buf.len() as u64,
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Seq2Seq<f32>> {
    let mut r = Reader { buf: bytes, at: 0 };
    let magic = r.take(4).map_err(|_| Error::BadMagic {
        expected: CHECKPOINT_MAGIC,
        found: bytes.to_vec(),
    })?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic.to_vec(),
        });
    }
    let version = r.take(1)?[0];
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let mut cfg = [0u32; 8];
    for v in &mut cfg {
        *v = r.u32()?;
    }
    let flavor = CellFlavor::from_code(cfg[6])
        .ok_or_else(|| Error::Malformed(format!("unknown cell flavor code {}", cfg[6])))?;
    let config = StackConfig {
        num_layers: cfg[0] as usize,
        hidden_channels: cfg[1] as usize,
        kernel_size: cfg[2] as usize,
        input_channels: cfg[3] as usize,
        in_len: cfg[4] as usize,
        out_len: cfg[5] as usize,
        flavor,
        attention_dim: cfg[7] as usize,
    };
    let mut model = Seq2Seq::<f32>::zeros(&config)?;
    let count = r.u32()? as usize;
    let mut records: HashMap<String, (Vec<usize>, &[u8])> = HashMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Malformed("parameter name is not UTF-8".into()))?
            .to_string();
        let ndims = r.u32()? as usize;
        let dims: Vec<usize> = (0..ndims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Malformed(format!("parameter {name}: dims overflow")))?;
        let payload = r.take(n)?;
        if records.insert(name.clone(), (dims, payload)).is_some() {
            return Err(Error::Malformed(format!("duplicate parameter {name}")));
        }
    }
    if r.at != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after parameters",
            bytes.len() - r.at
        )));
    }
    let mut problem = None;
    model.visit_mut("", &mut |name, dims, values| {
        if problem.is_some() {
            return;
        }
        match records.remove(name) {
            Some((d, payload)) if d == dims => {
                for (v, chunk) in values.iter_mut().zip(payload.chunks_exact(4)) {
                    *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                }
            }
            Some((d, _)) => {
                problem = Some(format!("parameter {name} has dims {d:?}, expected {dims:?}"));
            }
            None => problem = Some(format!("missing parameter {name}")),
        }
    });
    if let Some(p) = problem {
        return Err(Error::CheckpointMismatch(p));
    }
    if let Some(extra) = records.keys().next() {
        return Err(Error::CheckpointMismatch(format!("unexpected parameter {extra}")));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Seq2Seq<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Seq2Seq<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Seq2Seq<f32> {
        let cfg = StackConfig {
            num_layers: 2,
            hidden_channels: 3,
            in_len: 4,
            out_len: 2,
            attention_dim: 5,
            ..StackConfig::default()
        };
        Seq2Seq::init(&cfg, 11).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = model();
        let bytes = checkpoint_to_bytes(&m);
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(checkpoint_to_bytes(&back), bytes);
    }

    #[test]
    fn corrupted_inputs_have_distinct_errors() {
        let bytes = checkpoint_to_bytes(&model());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(checkpoint_from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            checkpoint_from_bytes(&bad),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
        let cut = &bytes[..bytes.len() - 3];
        match checkpoint_from_bytes(cut) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(actual, cut.len() as u64);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(checkpoint_from_bytes(&long), Err(Error::Malformed(_))));
    }

    #[test]
    fn huge_length_field_is_rejected_without_allocating() {
        let mut bytes = checkpoint_to_bytes(&model());
        // first record's name length
        let at = 4 + 1 + 32 + 4;
        bytes[at..at + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(checkpoint_from_bytes(&bytes), Err(Error::Truncated { .. })));
    }
}
