//! Binary checkpoint container: JSON header plus a flat named-tensor map.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, UTF-8 JSON header,
//! then every tensor as little-endian `f64` in header order. Values round-trip
//! bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TTCKPT01";
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

pub type TensorMap = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorIndex>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorIndex {
    name: String,
    shape: Vec<usize>,
    len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub meta: serde_json::Value,
    pub tensors: TensorMap,
}

impl Container {
    pub fn new(meta: serde_json::Value) -> Self {
        Container {
            meta,
            tensors: TensorMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, (shape, v))| TensorIndex {
                    name: name.clone(),
                    shape: shape.clone(),
                    len: v.len(),
                })
                .collect(),
        };
        let hjson = serde_json::to_vec(&header).expect("header serializes");
        let total: usize = self.tensors.values().map(|(_, v)| v.len()).sum();
        let mut out = Vec::with_capacity(16 + hjson.len() + 8 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(hjson.len() as u64).to_le_bytes());
        out.extend_from_slice(&hjson);
        for (_, v) in self.tensors.values() {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported schema version {}",
                header.schema_version
            )));
        }
        let mut pos = 16 + hlen;
        let mut tensors = TensorMap::new();
        for t in header.tensors {
            if t.shape.iter().product::<usize>() != t.len {
                return Err(bad("shape/length mismatch"));
            }
            let raw = bytes
                .get(pos..pos + 8 * t.len)
                .ok_or_else(|| bad("truncated tensor data"))?;
            let v = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 8 * t.len;
            tensors.insert(t.name, (t.shape, v));
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Container {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
