//! EMB1 binary embedding files.
//!
//! Layout (all integers little-endian, no padding):
//!
//! ```text
//! magic    "EMB1"            4 bytes
//! version  u32 = 1
//! dim      u32
//! count    u64
//! count × { id_len u16, id (UTF-8), dim × f32 }
//! [meta_len u32, meta JSON (UTF-8)]      optional trailing block
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Image => f.write_str("image"),
            Modality::Text => f.write_str("text"),
        }
    }
}

/// Metadata block stored after the rows.
///
/// Keys other than the three named fields are preserved in `extra`, so
/// producers can record provenance (preprocessing transform, probe
/// parameters) without a format change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub model_id: String,
    pub modality: Modality,
    #[serde(default)]
    pub source: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl EmbeddingMeta {
    pub fn new(model_id: impl Into<String>, modality: Modality, source: impl Into<String>) -> Self {
        EmbeddingMeta {
            model_id: model_id.into(),
            modality,
            source: source.into(),
            extra: serde_json::Map::new(),
        }
    }
}

/// Named rows of fixed-dimension `f32` vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    meta: Option<EmbeddingMeta>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major `data`, checking every invariant.
    pub fn new(
        ids: Vec<String>,
        dim: usize,
        data: Vec<f32>,
        meta: Option<EmbeddingMeta>,
    ) -> Result<Self> {
        let m = EmbeddingMatrix {
            ids,
            dim,
            data,
            meta,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from per-row vectors.
    pub fn from_rows(
        ids: Vec<String>,
        rows: &[Vec<f32>],
        meta: Option<EmbeddingMeta>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::Validation(format!(
                "row {i} has {} values, expected {dim}",
                r.len()
            )));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(ids, dim, data, meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("dim must be at least 1".into()));
        }
        if self.dim > u32::MAX as usize {
            return Err(Error::Validation(format!("dim {} exceeds u32", self.dim)));
        }
        if self.ids.is_empty() {
            return Err(Error::Validation("matrix has zero rows".into()));
        }
        if self.data.len() != self.ids.len() * self.dim {
            return Err(Error::Validation(format!(
                "{} ids but {} values for dim {}",
                self.ids.len(),
                self.data.len(),
                self.dim
            )));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if id.is_empty() {
                return Err(Error::Validation("empty row id".into()));
            }
            if id.len() > u16::MAX as usize {
                return Err(Error::Validation(format!(
                    "row id of {} bytes exceeds the u16 length field",
                    id.len()
                )));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate row id `{id}`")));
            }
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            let row = pos / self.dim;
            return Err(Error::Validation(format!(
                "non-finite value in row `{}` at column {}",
                self.ids[row],
                pos % self.dim
            )));
        }
        Ok(())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn meta(&self) -> Option<&EmbeddingMeta> {
        self.meta.as_ref()
    }

    pub fn set_meta(&mut self, meta: Option<EmbeddingMeta>) {
        self.meta = meta;
    }

    /// Model id from the metadata block, if any.
    pub fn model_id(&self) -> Option<&str> {
        self.meta.as_ref().map(|m| m.model_id.as_str())
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row promoted to `f64` for statistics.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn row_by_id(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    /// New matrix holding the given rows in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(ids, self.dim, data, self.meta.clone())
    }

    /// Serializes to EMB1 bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let id_bytes: usize = self.ids.iter().map(|s| 2 + s.len()).sum();
        let mut out = Vec::with_capacity(20 + id_bytes + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in self.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(meta) = &self.meta {
            let json = serde_json::to_vec(meta)
                .map_err(|e| Error::Validation(format!("metadata not serializable: {e}")))?;
            let len = u32::try_from(json.len())
                .map_err(|_| Error::Validation("metadata block too large".into()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(&json);
        }
        Ok(out)
    }

    /// Parses EMB1 bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"EMB1\"",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = cur.u32("dim")? as usize;
        let count = cur.u64("count")?;
        if dim == 0 {
            return Err(Error::Validation("dim must be at least 1".into()));
        }
        if count == 0 {
            return Err(Error::Validation("matrix has zero rows".into()));
        }
        // Each row needs at least its length prefix and its floats.
        let min_row = 2 + 4 * dim as u64;
        if count.saturating_mul(min_row) > cur.remaining() as u64 {
            return Err(Error::Format(format!(
                "truncated payload: {count} rows of dim {dim} cannot fit in {} bytes",
                cur.remaining()
            )));
        }
        let count = count as usize;
        let mut ids = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for row in 0..count {
            let id_len = cur.u16("id length")? as usize;
            let raw = cur.take(id_len, "row id")?;
            let id = std::str::from_utf8(raw)
                .map_err(|_| Error::Format(format!("row {row} id is not valid UTF-8")))?;
            ids.push(id.to_owned());
            let floats = cur.take(dim * 4, "row values")?;
            data.extend(
                floats
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
        }
        let meta = if cur.remaining() == 0 {
            None
        } else {
            let len = cur.u32("metadata length")? as usize;
            let raw = cur.take(len, "metadata")?;
            let meta: EmbeddingMeta = serde_json::from_slice(raw)
                .map_err(|e| Error::Format(format!("metadata JSON: {e}")))?;
            if cur.remaining() != 0 {
                return Err(Error::Format(format!(
                    "{} trailing bytes after metadata",
                    cur.remaining()
                )));
            }
            Some(meta)
        };
        Self::new(ids, dim, data, meta)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated payload reading {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = matrix.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
