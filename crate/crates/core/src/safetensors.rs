//! Minimal reader/writer for the safetensors container: an 8-byte
//! little-endian header length, a JSON header, then raw little-endian
//! tensor bytes.

use std::collections::BTreeMap;
use std::path::Path;

use half::{bf16, f16};
use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

/// A tensor converted to `f64`, with its original shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    /// Views 1-D tensors as a single row and 2-D tensors as-is.
    pub fn into_matrix(self) -> Result<Matrix> {
        let (r, c) = match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            [] => (1, 1),
            other => {
                return Err(Error::Config(format!(
                    "tensor of rank {} cannot be used as a matrix",
                    other.len()
                )))
            }
        };
        Matrix::from_shape_vec((r, c), self.data).map_err(|e| Error::Config(format!("tensor shape: {e}")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SafeTensors {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl SafeTensors {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("malformed safetensors: {m}"));
        if bytes.len() < 8 {
            return Err(bad("file shorter than header length"));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header_end = 8usize
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("header length out of range"))?;
        let header: BTreeMap<String, serde_json::Value> =
            serde_json::from_slice(&bytes[8..header_end]).map_err(|e| bad(&format!("header JSON: {e}")))?;
        let data = &bytes[header_end..];

        let mut out = SafeTensors::default();
        for (name, value) in header {
            if name == "__metadata__" {
                out.metadata = serde_json::from_value(value).map_err(|e| bad(&e.to_string()))?;
                continue;
            }
            let entry: Entry = serde_json::from_value(value).map_err(|e| bad(&format!("{name}: {e}")))?;
            let [start, end] = entry.data_offsets;
            if start > end || end > data.len() {
                return Err(bad(&format!("{name}: data offsets out of range")));
            }
            let raw = &data[start..end];
            let count: usize = entry.shape.iter().product();
            let width = match entry.dtype.as_str() {
                "F64" => 8,
                "F32" => 4,
                "F16" | "BF16" => 2,
                other => return Err(bad(&format!("{name}: unsupported dtype {other}"))),
            };
            if raw.len() != count * width {
                return Err(bad(&format!("{name}: byte length does not match shape")));
            }
            let values: Vec<f64> = match entry.dtype.as_str() {
                "F64" => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                "F32" => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                "F16" => raw
                    .chunks_exact(2)
                    .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f64())
                    .collect(),
                _ => raw
                    .chunks_exact(2)
                    .map(|c| bf16::from_le_bytes([c[0], c[1]]).to_f64())
                    .collect(),
            };
            out.tensors.insert(
                name,
                Tensor {
                    shape: entry.shape,
                    data: values,
                },
            );
        }
        Ok(out)
    }

    pub fn insert_matrix(&mut self, name: impl Into<String>, m: &Matrix) {
        self.tensors.insert(
            name.into(),
            Tensor {
                shape: vec![m.nrows(), m.ncols()],
                data: m.iter().copied().collect(),
            },
        );
    }

    /// Serialises every tensor as F64, in name order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = serde_json::Map::new();
        if !self.metadata.is_empty() {
            header.insert("__metadata__".into(), serde_json::to_value(&self.metadata).unwrap());
        }
        let mut offset = 0;
        for (name, t) in &self.tensors {
            let len = t.data.len() * 8;
            let entry = Entry {
                dtype: "F64".into(),
                shape: t.shape.clone(),
                data_offsets: [offset, offset + len],
            };
            header.insert(name.clone(), serde_json::to_value(entry).unwrap());
            offset += len;
        }
        let mut json = serde_json::to_vec(&header).unwrap();
        while !(8 + json.len()).is_multiple_of(8) {
            json.push(b' ');
        }
        let mut out = Vec::with_capacity(8 + json.len() + offset);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn take_matrix(&mut self, name: &str) -> Option<Result<Matrix>> {
        self.tensors.remove(name).map(Tensor::into_matrix)
    }
}

/// Writes F32 tensors, the dtype most published checkpoints use.
pub fn to_bytes_f32(tensors: &BTreeMap<String, (Vec<usize>, Vec<f32>)>) -> Vec<u8> {
    let mut header = serde_json::Map::new();
    let mut offset = 0;
    for (name, (shape, data)) in tensors {
        let len = data.len() * 4;
        header.insert(
            name.clone(),
            serde_json::to_value(Entry {
                dtype: "F32".into(),
                shape: shape.clone(),
                data_offsets: [offset, offset + len],
            })
            .unwrap(),
        );
        offset += len;
    }
    let json = serde_json::to_vec(&header).unwrap();
    let mut out = Vec::new();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, data) in tensors.values() {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
