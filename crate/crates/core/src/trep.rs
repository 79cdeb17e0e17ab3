// SPDX-License-Identifier: MIT OR Apache-2.0

//! TREP: the binary embedding container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   magic            b"TREP"
//! 4   version          u16 = 1
//! 6   flags            u16 = 0
//! 8   d_model          u32
//! 12  layer            u32
//! 16  reference_patch  u32
//! 20  rows             u64
//! 28  data             rows * d_model f32, row-major
//! ..  reference_times  rows u64
//! ..  crc32            u32 over every preceding byte (header included)
//! ```
//!
//! A JSON sidecar `<file>.meta.json` carries the provider id, dataset name
//! and window spec, plus bank-specific extras when the file holds a memory bank.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingConfig, EmbeddingError, EmbeddingMatrix};
use crate::ingest::WindowSpec;

pub const MAGIC: [u8; 4] = *b"TREP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Error)]
pub enum TrepError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes {0:?}, expected \"TREP\"")]
    BadMagic([u8; 4]),
    #[error("unsupported TREP version {found}, expected {VERSION}")]
    VersionMismatch { found: u16 },
    #[error("unsupported TREP flags {0:#06x}")]
    UnsupportedFlags(u16),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} trailing bytes after checksum")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("missing sidecar {0}")]
    MissingSidecar(PathBuf),
    #[error("invalid sidecar {path}: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("header and sidecar disagree on {field}: header {header}, sidecar {sidecar}")]
    MetaMismatch {
        field: &'static str,
        header: u64,
        sidecar: u64,
    },
    #[error("{field} = {value} does not fit the header field")]
    Overflow { field: &'static str, value: u64 },
    #[error(transparent)]
    Matrix(#[from] EmbeddingError),
}

/// Fixed header fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrepHeader {
    pub d_model: u32,
    pub layer: u32,
    pub reference_patch: u32,
    pub rows: u64,
}

/// Sidecar contents. Bank artifacts fill the optional `bank` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrepMeta {
    pub provider_id: String,
    pub dataset: String,
    pub window: WindowSpec,
    pub layer: u32,
    pub d_model: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl TrepMeta {
    pub fn from_config(config: &EmbeddingConfig, dataset: impl Into<String>) -> Self {
        Self {
            provider_id: config.provider_id.clone(),
            dataset: dataset.into(),
            window: config.window,
            layer: config.layer,
            d_model: config.d_model,
            bank: None,
            notes: None,
        }
    }

    pub fn config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            layer: self.layer,
            d_model: self.d_model,
            window: self.window,
            provider_id: self.provider_id.clone(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn checked_u32(field: &'static str, value: u64) -> Result<u32, TrepError> {
    u32::try_from(value).map_err(|_| TrepError::Overflow { field, value })
}

/// Encodes a matrix into TREP bytes.
pub fn encode(matrix: &EmbeddingMatrix, layer: u32, reference_patch: u32) -> Result<Vec<u8>, TrepError> {
    let d_model = checked_u32("d_model", matrix.dim() as u64)?;
    let rows = matrix.rows();
    let mut buf = Vec::with_capacity(HEADER_LEN + rows * (matrix.dim() * 4 + 8) + 4);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&d_model.to_le_bytes());
    buf.extend_from_slice(&layer.to_le_bytes());
    buf.extend_from_slice(&reference_patch.to_le_bytes());
    buf.extend_from_slice(&(rows as u64).to_le_bytes());
    for v in matrix.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for t in matrix.reference_times() {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// Decodes TREP bytes, validating magic, version, length and checksum.
pub fn decode(bytes: &[u8]) -> Result<(TrepHeader, EmbeddingMatrix), TrepError> {
    if bytes.len() < 4 {
        return Err(TrepError::Truncated {
            expected: HEADER_LEN + 4,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(TrepError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(TrepError::Truncated {
            expected: HEADER_LEN + 4,
            actual: bytes.len(),
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let version = u16_at(4);
    if version != VERSION {
        return Err(TrepError::VersionMismatch { found: version });
    }
    let flags = u16_at(6);
    if flags != 0 {
        return Err(TrepError::UnsupportedFlags(flags));
    }
    let header = TrepHeader {
        d_model: u32_at(8),
        layer: u32_at(12),
        reference_patch: u32_at(16),
        rows: u64_at(20),
    };

    let dim = header.d_model as usize;
    let expected = usize::try_from(header.rows)
        .ok()
        .and_then(|rows| rows.checked_mul(dim * 4 + 8))
        .and_then(|payload| payload.checked_add(HEADER_LEN + 4))
        .unwrap_or(usize::MAX);
    if bytes.len() < expected {
        return Err(TrepError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(TrepError::TrailingBytes(bytes.len() - expected));
    }

    let body_end = expected - 4;
    let stored = u32_at(body_end);
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(TrepError::ChecksumMismatch { stored, computed });
    }

    let rows = header.rows as usize;
    let data_end = HEADER_LEN + rows * dim * 4;
    let data = bytes[HEADER_LEN..data_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let times = bytes[data_end..body_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let matrix = EmbeddingMatrix::new(dim, data, times)?;
    Ok((header, matrix))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrepError + '_ {
    move |source| TrepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the TREP file and its JSON sidecar.
pub fn write_trep(path: &Path, matrix: &EmbeddingMatrix, meta: &TrepMeta) -> Result<(), TrepError> {
    if meta.d_model != matrix.dim() {
        return Err(TrepError::MetaMismatch {
            field: "d_model",
            header: matrix.dim() as u64,
            sidecar: meta.d_model as u64,
        });
    }
    let reference_patch = checked_u32("reference_patch", meta.window.reference_patch as u64)?;
    let bytes = encode(matrix, meta.layer, reference_patch)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).map_err(|source| TrepError::Sidecar {
        path: side.clone(),
        source,
    })?;
    fs::write(&side, json + "\n").map_err(io_err(&side))?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<TrepMeta, TrepError> {
    let side = sidecar_path(path);
    let text = match fs::read_to_string(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(TrepError::MissingSidecar(side)),
        Err(e) => return Err(io_err(&side)(e)),
    };
    serde_json::from_str(&text).map_err(|source| TrepError::Sidecar { path: side, source })
}

/// Reads a TREP file and its sidecar, cross-checking the shared fields.
pub fn read_trep(path: &Path) -> Result<(EmbeddingMatrix, TrepMeta), TrepError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (header, matrix) = decode(&bytes)?;
    let meta = read_sidecar(path)?;
    let checks = [
        ("d_model", header.d_model as u64, meta.d_model as u64),
        ("layer", header.layer as u64, meta.layer as u64),
        (
            "reference_patch",
            header.reference_patch as u64,
            meta.window.reference_patch as u64,
        ),
    ];
    for (field, header, sidecar) in checks {
        if header != sidecar {
            return Err(TrepError::MetaMismatch { field, header, sidecar });
        }
    }
    Ok((matrix, meta))
}
