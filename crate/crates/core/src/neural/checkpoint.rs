//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `DHC1`; `u32` length + JSON header; `u32`
//! entry count; per entry `u32` name length, name, `u8` dtype, `u8` rank,
//! `u64` dims, `u64` payload offset, `u64` byte length; then the payload.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::params::{NetworkConfig, NetworkParams};
use super::real::{DType, Real};
use super::tensor::Tensor;
use super::NeuralError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DHC1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub network: NetworkConfig,
    pub gamma: f64,
    pub n_step: usize,
    /// Free-form section for training state.
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    entries: Vec<Entry>,
}

fn err(msg: impl Into<String>) -> NeuralError {
    NeuralError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(header: CheckpointHeader) -> Self {
        Checkpoint { header, entries: Vec::new() }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    fn entry(&self, name: &str) -> Result<&Entry, NeuralError> {
        self.entries.iter().find(|e| e.name == name).ok_or_else(|| err(format!("missing entry {name}")))
    }

    pub fn push_tensor<T: Real>(&mut self, name: &str, t: &Tensor<T>) {
        let mut bytes = Vec::with_capacity(t.len() * T::DTYPE.size());
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
        self.entries.push(Entry { name: name.to_string(), dtype: T::DTYPE, shape: t.shape().to_vec(), bytes });
    }

    pub fn push_blob(&mut self, name: &str, bytes: Vec<u8>) {
        self.entries.push(Entry { name: name.to_string(), dtype: DType::U8, shape: vec![bytes.len()], bytes });
    }

    pub fn blob(&self, name: &str) -> Result<&[u8], NeuralError> {
        let e = self.entry(name)?;
        if e.dtype != DType::U8 {
            return Err(err(format!("{name} is not a byte blob")));
        }
        Ok(&e.bytes)
    }

    /// Reads a tensor, converting between floating-point widths if needed.
    pub fn tensor<T: Real>(&self, name: &str) -> Result<Tensor<T>, NeuralError> {
        let e = self.entry(name)?;
        let data: Vec<T> = match e.dtype {
            DType::F32 => e.bytes.chunks_exact(4).map(|c| T::lit(f64::from(f32::read_le(c)))).collect(),
            DType::F64 => e.bytes.chunks_exact(8).map(|c| T::lit(f64::read_le(c))).collect(),
            DType::U8 => return Err(err(format!("{name} is a byte blob, not a tensor"))),
        };
        Ok(Tensor::from_vec(&e.shape, data))
    }

    pub fn push_params<T: Real>(&mut self, prefix: &str, p: &NetworkParams<T>) {
        for (name, t) in p.tensors() {
            self.push_tensor(&format!("{prefix}{name}"), t);
        }
    }

    pub fn params<T: Real>(&self, prefix: &str, cfg: &NetworkConfig) -> Result<NetworkParams<T>, NeuralError> {
        let mut p = NetworkParams::zeros(cfg);
        for (name, t) in p.tensors_mut() {
            let loaded: Tensor<T> = self.tensor(&format!("{prefix}{name}"))?;
            if loaded.shape() != t.shape() {
                return Err(NeuralError::ArchitectureMismatch(format!(
                    "{name}: stored shape {:?}, expected {:?}",
                    loaded.shape(),
                    t.shape()
                )));
            }
            *t = loaded;
        }
        Ok(p)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NeuralError> {
        let header = serde_json::to_vec(&self.header).map_err(|e| err(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype as u8);
            out.push(e.shape.len() as u8);
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(e.bytes.len() as u64).to_le_bytes());
            offset += e.bytes.len() as u64;
        }
        for e in &self.entries {
            out.extend_from_slice(&e.bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(err("bad magic; not a checkpoint file"));
        }
        let hlen = r.u32()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?).map_err(|e| err(format!("header: {e}")))?;
        let count = r.u32()? as usize;
        let mut metas = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| err("entry name is not UTF-8"))?;
            let dtype = DType::from_u8(r.take(1)?[0]).ok_or_else(|| err(format!("{name}: unknown dtype")))?;
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
            let offset = r.u64()? as usize;
            let len = r.u64()? as usize;
            if shape.iter().product::<usize>() * dtype.size() != len {
                return Err(err(format!("{name}: byte length {len} does not match shape {shape:?}")));
            }
            metas.push((name, dtype, shape, offset, len));
        }
        let payload = &bytes[r.pos..];
        let mut entries = Vec::with_capacity(metas.len());
        for (name, dtype, shape, offset, len) in metas {
            let end = offset.checked_add(len).filter(|&e| e <= payload.len());
            let Some(end) = end else {
                return Err(err(format!("{name}: payload truncated")));
            };
            entries.push(Entry { name, dtype, shape, bytes: payload[offset..end].to_vec() });
        }
        Ok(Checkpoint { header, entries })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| err("file truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NeuralError> {
    let bytes = ckpt.to_bytes()?;
    let tmp = path.with_extension("partial");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NeuralError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

/// Writes a network-only checkpoint.
pub fn save_checkpoint<T: Real>(path: &Path, net: &Network<T>, gamma: f64, n_step: usize) -> Result<(), NeuralError> {
    let mut c = Checkpoint::new(CheckpointHeader { network: net.config.clone(), gamma, n_step, extra: serde_json::Value::Null });
    c.push_params("", &net.params);
    write_checkpoint(path, &c)
}

/// Loads the online network stored in any checkpoint.
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(CheckpointHeader, Network<T>), NeuralError> {
    let c = read_checkpoint(path)?;
    let cfg = c.header.network.clone();
    cfg.validate()?;
    let params = c.params("", &cfg)?;
    Ok((c.header, Network { config: cfg, params }))
}
