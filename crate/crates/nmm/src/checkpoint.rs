//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "NMM1"  u16 version
//! u32 config length, config text (TOML, UTF-8)
//! u32 record count
//! per record: u32 name length, name (UTF-8), u32 rank, rank x u32 dims,
//!             f32 payload
//! u64 FNV-1a of every preceding byte
//! ```
//!
//! Records follow the model's parameter visiting order and include the
//! batch-norm running statistics.

use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use nmm_core::param::Params;
use nmm_core::tensor::Shape;
use nmm_core::{Model, Rng, RunConfig, Tensor};

use crate::config::{self, ConfigError};

pub const MAGIC: &[u8; 4] = b"NMM1";
pub const VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint: bad magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("checkpoint config: {0}")]
    Config(#[from] ConfigError),
    #[error("checkpoint record: {0}")]
    Record(String),
}

/// A trained model together with the run configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub model: Model<f32>,
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

impl Checkpoint {
    pub fn new(config: RunConfig, model: Model<f32>) -> Self {
        Checkpoint { config, model }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut cfg = self.config.clone();
        cfg.model = self.model.config.clone();
        let text = config::to_text(&cfg);
        put_u32(&mut out, text.len());
        out.extend_from_slice(text.as_bytes());

        let mut records = Vec::new();
        let mut count = 0;
        self.model.visit("", &mut |name, p| {
            count += 1;
            put_u32(&mut records, name.len());
            records.extend_from_slice(name.as_bytes());
            let dims = p.value.shape().dims();
            put_u32(&mut records, dims.len());
            for d in dims {
                put_u32(&mut records, d);
            }
            for v in p.value.data() {
                records.extend_from_slice(&v.to_le_bytes());
            }
        });
        put_u32(&mut out, count);
        out.extend_from_slice(&records);
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 4 + 2 + 8 {
            return Err(CheckpointError::Truncated);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("eight bytes"));
        let computed = checksum(body);
        if stored != computed {
            return Err(CheckpointError::Checksum { stored, computed });
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("two bytes"));
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let len = r.u32()?;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CheckpointError::Record("config text is not UTF-8".into()))?;
        let config = config::parse_config(text)?;

        let mut model = Model::<f32>::new(&config.model, &mut Rng::new(0))
            .map_err(|e| CheckpointError::Config(e.into()))?;
        let count = r.u32()?;
        let mut loaded = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CheckpointError::Record("name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()?;
            if rank != 3 {
                return Err(CheckpointError::Record(format!("{name}: rank {rank}, expected 3")));
            }
            let dims = [r.u32()?, r.u32()?, r.u32()?];
            let shape = Shape::new(dims[0], dims[1], dims[2]);
            let payload = r.take(shape.len() * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            let value = Tensor::from_vec(shape, data).expect("length checked");
            loaded.push((name, value));
        }
        if r.pos != body.len() {
            return Err(CheckpointError::Record("trailing bytes after records".into()));
        }

        let mut it = loaded.into_iter();
        let mut problem = None;
        let mut expected = 0;
        model.visit_mut("", &mut |name, p| {
            expected += 1;
            if problem.is_some() {
                return;
            }
            match it.next() {
                Some((n, v)) if n == name && v.shape() == p.value.shape() => p.value = v,
                Some((n, v)) => {
                    problem = Some(format!(
                        "expected {name} {}, found {n} {}",
                        p.value.shape(),
                        v.shape()
                    ))
                }
                None => problem = Some(format!("missing {name}")),
            }
        });
        if let Some(p) = problem {
            return Err(CheckpointError::Record(p));
        }
        if count != expected {
            return Err(CheckpointError::Record(format!(
                "{count} records for a model with {expected}"
            )));
        }
        Ok(Checkpoint { config, model })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("four bytes")) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nmm_core::ModelConfig;

    fn sample() -> Checkpoint {
        let mut config = RunConfig::default();
        config.model = ModelConfig {
            channels: 8,
            blocks_per_tower: 1,
            kernel_size: 3,
            towers: vec![2, 1],
            feature_dim: 5,
            vocab_size: 3,
            ..ModelConfig::default()
        };
        let model = Model::new(&config.model, &mut Rng::new(3)).unwrap();
        Checkpoint::new(config, model)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"NMM1");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::Checksum { .. })
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Checksum { .. })
        ));
        assert!(matches!(
            Checkpoint::from_bytes(b"NMM0rest"),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        let n = bytes.len() - 8;
        let sum = checksum(&bytes[..n]);
        bytes[n..].copy_from_slice(&sum.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Version(9))
        ));
    }
}
