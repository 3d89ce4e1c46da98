//! Binary checkpoints.
//!
//! Layout (little endian): 8-byte magic `FREDFCKP`, `u32` version, `u64`
//! length of a JSON metadata block and the block itself, `u32` tensor count,
//! then per tensor a `u32`-prefixed UTF-8 name, `u32` rank, `u64` dims and the
//! raw `f64` values. Values round-trip bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_parameters, ModelConfig, ParameterSet};
use crate::data::NormStats;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FREDFCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    stats: Option<NormStats>,
}

/// Everything needed to rebuild a trained forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterSet,
    /// Normalization fitted on the training split, when known.
    pub stats: Option<NormStats>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.params.check(&self.config)?;
        let meta = serde_json::to_vec(&Meta {
            config: self.config.clone(),
            stats: self.stats.clone(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        let names = self.params.tensor_names();
        let tensors = self.params.tensors();
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for ((name, _), t) in names.iter().zip(tensors) {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = read_len(&mut r, 1 << 30)?;
        let mut meta = vec![0u8; meta_len];
        read_exact(&mut r, &mut meta)?;
        let meta: Meta = serde_json::from_slice(&meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;

        let mut params = init_parameters(&meta.config, 0)?;
        let names = params.tensor_names();
        let count = read_u32(&mut r)? as usize;
        if count != names.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors for this config, found {count}",
                names.len()
            )));
        }
        for ((expected, _), t) in names.iter().zip(params.tensors_mut()) {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len.min(4096)];
            read_exact(&mut r, &mut name)?;
            if name != expected.as_bytes() {
                return Err(Error::Checkpoint(format!(
                    "expected tensor `{expected}`, found `{}`",
                    String::from_utf8_lossy(&name)
                )));
            }
            let rank = read_u32(&mut r)? as usize;
            let dims = (0..rank).map(|_| read_len(&mut r, usize::MAX)).collect::<Result<Vec<_>>>()?;
            if dims != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{expected}` has shape {dims:?}, config implies {:?}",
                    t.shape()
                )));
            }
            let mut buf = [0u8; 8];
            for v in t.data_mut() {
                read_exact(&mut r, &mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        if !params.all_finite() {
            return Err(Error::Checkpoint("checkpoint holds non-finite values".into()));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
        }
        Ok(Self {
            config: meta.config,
            params,
            stats: meta.stats,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref())?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("file is truncated".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_len<R: Read>(r: &mut R, max: usize) -> Result<usize> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    let v = u64::from_le_bytes(b);
    usize::try_from(v)
        .ok()
        .filter(|&n| n <= max)
        .ok_or_else(|| Error::Checkpoint(format!("length field {v} is out of range")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = ModelConfig {
            lookback: 8,
            horizon: 8,
            channels: 2,
            dim: 3,
            layers: 2,
            dropout: 0.1,
            hidden: Some(4),
        };
        let mut params = init_parameters(&config, 5).unwrap();
        params.fusion.layers[1].data_mut()[0] = -0.1 / 3.0;
        Checkpoint {
            params,
            config,
            stats: Some(NormStats {
                mean: vec![1.0 / 3.0, -2.0],
                std: vec![0.7, 1e-3],
            }),
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let ck = sample();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn stats_survive_bit_exact() {
        let mut ck = sample();
        let mut x = 0x9e37_79b9_7f4a_7c15u64;
        for _ in 0..200 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let v = f64::from_bits((x >> 12) | 0x3ff0_0000_0000_0000) - 1.0;
            ck.stats = Some(NormStats {
                mean: vec![v * 1e3, -v],
                std: vec![1.0 + v, v * 1e-5 + 1e-9],
            });
            let mut bytes = Vec::new();
            ck.write_to(&mut bytes).unwrap();
            let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
            assert_eq!(back.stats, ck.stats);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        sample().save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), sample());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read_from(bad.as_slice()), Err(Error::Checkpoint(_))));
        assert!(matches!(Checkpoint::read_from(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Checkpoint::read_from(extra.as_slice()), Err(Error::Checkpoint(_))));
        let mut version = bytes;
        version[8] = 9;
        assert!(matches!(Checkpoint::read_from(version.as_slice()), Err(Error::Checkpoint(_))));
    }
}
