//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! [ 4] magic  b"COIN"
//! [ 4] format version  u32
//! [ 8] config hash     u64  (FNV-1a over the config JSON bytes)
//! [ 8] training step   u64
//! [ 8] rng state       u64
//! [ 4] config length   u32
//! [ n] run config as canonical JSON (embeds the model config)
//! [ 4] parameter count u32
//! per parameter:
//!   [2] name length u16, [k] name UTF-8
//!   [4] rank u32, [4×rank] dims u32
//!   [8×numel] values f64
//! ```
//!
//! The magic, version and hash are verified before any array is read;
//! loading a saved checkpoint reproduces every parameter bitwise.

use super::{io, PipelineError, RunConfig};
use crate::autodiff::Tensor;
use crate::model::Params;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"COIN";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub config_hash: u64,
    pub step: u64,
    pub rng_state: u64,
    pub params: Params,
}

pub fn save_checkpoint(
    path: &Path,
    config: &RunConfig,
    params: &Params,
    step: u64,
    rng_state: u64,
) -> Result<u64, PipelineError> {
    let config_json = config.canonical_json();
    let hash = fnv1a64(config_json.as_bytes());

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&hash.to_le_bytes());
    buf.extend_from_slice(&step.to_le_bytes());
    buf.extend_from_slice(&rng_state.to_le_bytes());
    buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(config_json.as_bytes());
    buf.extend_from_slice(&(params.entries().len() as u32).to_le_bytes());
    for (name, tensor) in params.entries() {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    io::write_bytes_atomic(path, &buf)?;
    Ok(hash)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], PipelineError> {
        if self.pos + n > self.bytes.len() {
            return Err(PipelineError::ShortRead {
                path: self.path.clone(),
                detail: format!("while reading {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16, PipelineError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32, PipelineError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, PipelineError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, PipelineError> {
    let bytes = std::fs::read(path)
        .map_err(|e| PipelineError::Io { path: path.display().to_string(), source: e })?;
    let mut r = Reader { bytes: &bytes, pos: 0, path: path.display().to_string() };

    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(PipelineError::BadMagic { path: r.path });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(PipelineError::Version {
            path: r.path,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let stored_hash = r.u64("config hash")?;
    let step = r.u64("step counter")?;
    let rng_state = r.u64("rng state")?;
    let config_len = r.u32("config length")? as usize;
    let config_bytes = r.take(config_len, "config JSON")?;
    let computed = fnv1a64(config_bytes);
    if computed != stored_hash {
        return Err(PipelineError::HashMismatch {
            path: r.path,
            stored: stored_hash,
            computed,
        });
    }
    let config: RunConfig = serde_json::from_slice(config_bytes).map_err(|e| {
        PipelineError::Corrupt { path: r.path.clone(), detail: format!("config JSON: {e}") }
    })?;

    let n_params = r.u32("parameter count")? as usize;
    let mut entries = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name_len = r.u16("parameter name length")? as usize;
        let name_bytes = r.take(name_len, "parameter name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| PipelineError::Corrupt {
                path: r.path.clone(),
                detail: "parameter name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u32("parameter rank")? as usize;
        if rank == 0 || rank > 2 {
            return Err(PipelineError::Corrupt {
                path: r.path.clone(),
                detail: format!("parameter {name} has rank {rank}"),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("parameter dim")? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(8 * numel, &format!("data of {name}"))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| PipelineError::Corrupt {
            path: r.path.clone(),
            detail: format!("parameter {name}: {e}"),
        })?;
        entries.push((name, tensor));
    }
    if r.pos != bytes.len() {
        return Err(PipelineError::Corrupt {
            path: r.path,
            detail: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    let params = Params::from_entries(config.model.clone(), entries)
        .map_err(|e| PipelineError::Corrupt { path: path.display().to_string(), detail: e.to_string() })?;
    Ok(Checkpoint { config, config_hash: stored_hash, step, rng_state, params })
}
