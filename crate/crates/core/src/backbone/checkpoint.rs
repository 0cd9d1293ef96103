//! Binary checkpoint container.
//!
//! Layout: the 8 magic bytes `CUTCKPT1`, a little-endian `u32` header length,
//! the JSON header, then every table as row-major little-endian `f32` in
//! header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::embedding::{EmbeddingTable, TableRole};
use crate::backbone::matrix::Matrix;
use crate::backbone::model::BackboneKind;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CUTCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    /// Single-domain TARGET-phase model.
    Target,
    /// Two-domain TRANSFER-phase model.
    Cut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableHeader {
    pub role: TableRole,
    pub rows: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: CheckpointKind,
    pub backbone: BackboneKind,
    pub layers: usize,
    pub dim: usize,
    pub tables: Vec<TableHeader>,
    pub hyperparameters: serde_json::Value,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tables: Vec<EmbeddingTable>,
}

impl Checkpoint {
    pub fn new(
        kind: CheckpointKind,
        backbone: BackboneKind,
        layers: usize,
        tables: Vec<EmbeddingTable>,
        hyperparameters: serde_json::Value,
        step: u64,
    ) -> Self {
        let dim = tables.first().map_or(0, EmbeddingTable::dim);
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            kind,
            backbone,
            layers,
            dim,
            tables: tables
                .iter()
                .map(|t| TableHeader {
                    role: t.role,
                    rows: t.rows(),
                    dim: t.dim(),
                })
                .collect(),
            hyperparameters,
            step,
        };
        Checkpoint { header, tables }
    }

    pub fn table(&self, role: TableRole) -> Result<&EmbeddingTable> {
        self.tables
            .iter()
            .find(|t| t.role == role)
            .ok_or_else(|| Error::Checkpoint(format!("missing table {role}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.header)?;
        let payload: usize = self.tables.iter().map(|t| t.values.as_slice().len() * 4).sum();
        let mut out = Vec::with_capacity(12 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tables {
            for &x in t.values.as_slice() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(12..12 + len)
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let raw: serde_json::Value = serde_json::from_slice(body)?;
        let found = raw
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Checkpoint("header lacks format_version".into()))? as u32;
        if found != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found,
                expected: FORMAT_VERSION,
            });
        }
        let header: CheckpointHeader = serde_json::from_value(raw)?;
        let mut pos = 12 + len;
        let mut tables = Vec::with_capacity(header.tables.len());
        for th in &header.tables {
            let n = th.rows * th.dim;
            let chunk = bytes
                .get(pos..pos + 4 * n)
                .ok_or_else(|| Error::Checkpoint(format!("truncated table {}", th.role)))?;
            let data = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            tables.push(EmbeddingTable::new(th.role, Matrix::from_vec(th.rows, th.dim, data)));
            pos += 4 * n;
        }
        if pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Checkpoint { header, tables })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
