//! Binary checkpoint container.
//!
//! Layout: magic `CRK1`, a little-endian `u64` header length, a JSON header
//! (groups with shapes and byte offsets, precision, free-form metadata),
//! then every group's values as little-endian row-major `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CRK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GroupEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    offset: u64,
    bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    precision: String,
    groups: Vec<GroupEntry>,
    meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub groups: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Checkpoint {
            meta,
            groups: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.groups.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.groups.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Fetch a group and verify its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing group `{name}`")))?;
        if t.shape() != shape {
            return Err(Error::Checkpoint(format!(
                "group `{name}` has shape {:?}, expected {:?}",
                t.shape(),
                shape
            )));
        }
        Ok(t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let groups = self
            .groups
            .iter()
            .map(|(name, t)| {
                let bytes = (t.len() * 8) as u64;
                let e = GroupEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    bytes,
                };
                offset += bytes;
                e
            })
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            precision: "f64".into(),
            groups,
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(12 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.groups {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let data_start = 12usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[12..data_start])?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }
        if header.precision != "f64" {
            return Err(Error::Checkpoint(format!(
                "unsupported precision `{}`",
                header.precision
            )));
        }
        let data = &bytes[data_start..];
        let mut groups = Vec::with_capacity(header.groups.len());
        for g in header.groups {
            let len: usize = g.shape.iter().product();
            if g.bytes as usize != len * 8 {
                return Err(Error::Checkpoint(format!("group `{}` size mismatch", g.name)));
            }
            let start = g.offset as usize;
            let end = start + g.bytes as usize;
            let raw = data
                .get(start..end)
                .ok_or_else(|| Error::Checkpoint(format!("group `{}` truncated", g.name)))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            groups.push((g.name, Tensor::from_vec(&g.shape, values)?));
        }
        Ok(Checkpoint {
            meta: header.meta,
            groups,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
