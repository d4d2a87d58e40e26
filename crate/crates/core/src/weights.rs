//! Named float-32 tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "LRCW"
//! version      u8       1
//! count        u32      number of tensors
//! count × {
//!   name_len   u16
//!   name       name_len bytes, UTF-8
//!   rank       u8       1..=4
//!   dims       rank × u32
//!   data       Π dims × f32
//! }
//! crc32        u32      CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Tensors are written in insertion order; names are unique.

use std::collections::BTreeMap;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"LRCW";
pub const VERSION: u8 = 1;
const MAX_RANK: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightsError {
    #[error("bad magic: not a weight container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated container: header")]
    TruncatedHeader,
    #[error("truncated container at tensor #{index}{}", name.as_ref().map(|n| format!(" ({n})")).unwrap_or_default())]
    TruncatedTensor { index: usize, name: Option<String> },
    #[error("tensor #{0} has a non-UTF-8 name")]
    BadName(usize),
    #[error("tensor {name}: rank {rank} outside 1..={MAX_RANK}")]
    BadRank { name: String, rank: u8 },
    #[error("duplicate tensor {0}")]
    Duplicate(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("{0} trailing bytes after checksum")]
    TrailingBytes(usize),
    #[error("tensor shape {shape:?} does not match {len} values")]
    ShapeData { shape: Vec<usize>, len: usize },
}

/// A dense float tensor in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, WeightsError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(WeightsError::ShapeData {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    order: Vec<String>,
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a tensor; replacement keeps the original position.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        if self.tensors.insert(name.clone(), tensor).is_none() {
            self.order.push(name);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Total number of stored values.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.parameter_count() * 4);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.order.len() as u32).to_le_bytes());
        for name in &self.order {
            let t = &self.tensors[name];
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightsError> {
        if bytes.len() < 4 {
            return Err(WeightsError::TruncatedHeader);
        }
        if &bytes[..4] != MAGIC {
            return Err(WeightsError::BadMagic);
        }
        if bytes.len() < 9 {
            return Err(WeightsError::TruncatedHeader);
        }
        if bytes[4] != VERSION {
            return Err(WeightsError::UnsupportedVersion(bytes[4]));
        }
        let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let mut pos = 9;
        let mut store = WeightStore::new();

        for index in 0..count {
            let mut name = None;
            let truncated = |name: &Option<String>| WeightsError::TruncatedTensor {
                index,
                name: name.clone(),
            };
            let take = |pos: &mut usize, n: usize| -> Option<&[u8]> {
                let end = pos.checked_add(n).filter(|&e| e <= bytes.len())?;
                let s = &bytes[*pos..end];
                *pos = end;
                Some(s)
            };
            let len_bytes = take(&mut pos, 2).ok_or_else(|| truncated(&name))?;
            let name_len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
            let raw = take(&mut pos, name_len).ok_or_else(|| truncated(&name))?;
            let n = std::str::from_utf8(raw).map_err(|_| WeightsError::BadName(index))?;
            name = Some(n.to_string());
            let rank = take(&mut pos, 1).ok_or_else(|| truncated(&name))?[0];
            if rank == 0 || rank as usize > MAX_RANK {
                return Err(WeightsError::BadRank {
                    name: n.to_string(),
                    rank,
                });
            }
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                let d = take(&mut pos, 4).ok_or_else(|| truncated(&name))?;
                shape.push(u32::from_le_bytes(d.try_into().unwrap()) as usize);
            }
            let elements = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| truncated(&name))?;
            let raw = take(&mut pos, elements).ok_or_else(|| truncated(&name))?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if store.tensors.contains_key(n) {
                return Err(WeightsError::Duplicate(n.to_string()));
            }
            store.insert(n, Tensor { shape, data });
        }

        let rest = &bytes[pos..];
        if rest.len() < 4 {
            return Err(WeightsError::TruncatedTensor {
                index: count,
                name: None,
            });
        }
        if rest.len() > 4 {
            return Err(WeightsError::TrailingBytes(rest.len() - 4));
        }
        let stored = u32::from_le_bytes(rest.try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..pos]);
        if stored != computed {
            return Err(WeightsError::Checksum { stored, computed });
        }
        Ok(store)
    }
}
