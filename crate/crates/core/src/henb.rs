//! HENB embedding container.
//!
//! Little-endian layout: magic `HENB`, version `u16 = 1`, flags `u16 = 0`,
//! then `u32` count, latent dimension and input dimension, followed by
//! `count` records of `u32` id, latent `f32`s and original `f32`s.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::codec::{EmbeddingTable, TableEntry};

pub const MAGIC: &[u8; 4] = b"HENB";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 4 * 3;

#[derive(Debug, Error)]
pub enum HenbError {
    #[error("not a HENB file (bad magic bytes)")]
    BadMagic,

    #[error("unsupported HENB version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported HENB flags {0:#06x}")]
    UnsupportedFlags(u16),

    #[error("truncated HENB payload: need {expected} bytes, found {got}")]
    Truncated { expected: usize, got: usize },

    #[error("HENB dimensions disagree: expected {expected}, found {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duplicate id {0} in HENB file")]
    DuplicateId(u32),

    #[error("non-finite value in HENB record {0}")]
    NonFinite(usize),

    #[error("dimension {0} does not fit the HENB u32 header")]
    TooLarge(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn f32_run(bytes: &[u8], at: usize, len: usize) -> Vec<f64> {
    bytes[at..at + 4 * len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect()
}

/// Parses a complete HENB byte buffer.
pub fn parse(bytes: &[u8], source: &str) -> Result<EmbeddingTable, HenbError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(HenbError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(HenbError::Truncated {
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(HenbError::UnsupportedVersion(version));
    }
    let flags = u16_at(bytes, 6);
    if flags != 0 {
        return Err(HenbError::UnsupportedFlags(flags));
    }
    let count = u32_at(bytes, 8) as usize;
    let latent_dim = u32_at(bytes, 12) as usize;
    let input_dim = u32_at(bytes, 16) as usize;

    let record_len = 4 + 4 * (latent_dim + input_dim);
    let expected = HEADER_LEN + count * record_len;
    if bytes.len() < expected {
        return Err(HenbError::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(HenbError::DimensionMismatch {
            expected,
            got: bytes.len(),
        });
    }

    let mut table = EmbeddingTable::new(latent_dim, input_dim, source);
    for n in 0..count {
        let at = HEADER_LEN + n * record_len;
        let id = u32_at(bytes, at);
        let latent = f32_run(bytes, at + 4, latent_dim);
        let original = f32_run(bytes, at + 4 + 4 * latent_dim, input_dim);
        if table.get(id).is_some() {
            return Err(HenbError::DuplicateId(id));
        }
        if latent.iter().chain(&original).any(|v| !v.is_finite()) {
            return Err(HenbError::NonFinite(n));
        }
        table
            .insert(TableEntry { id, latent, original })
            .expect("record validated above");
    }
    Ok(table)
}

pub fn read_table(mut reader: impl Read, source: &str) -> Result<EmbeddingTable, HenbError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse(&bytes, source)
}

pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable, HenbError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    parse(&bytes, &path.display().to_string())
}

/// Loads a table and checks it has the expected dimensions.
pub fn load_with_dims(
    path: impl AsRef<Path>,
    latent_dim: usize,
    input_dim: usize,
) -> Result<EmbeddingTable, HenbError> {
    let table = load_embedding_table(path)?;
    if table.latent_dim() != latent_dim {
        return Err(HenbError::DimensionMismatch {
            expected: latent_dim,
            got: table.latent_dim(),
        });
    }
    if table.input_dim() != input_dim {
        return Err(HenbError::DimensionMismatch {
            expected: input_dim,
            got: table.input_dim(),
        });
    }
    Ok(table)
}

fn header_u32(v: usize) -> Result<u32, HenbError> {
    u32::try_from(v).map_err(|_| HenbError::TooLarge(v))
}

/// Serializes a table. Values are narrowed to `f32`.
pub fn to_bytes(table: &EmbeddingTable) -> Result<Vec<u8>, HenbError> {
    let record_len = 4 + 4 * (table.latent_dim() + table.input_dim());
    let mut out = Vec::with_capacity(HEADER_LEN + table.len() * record_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&header_u32(table.len())?.to_le_bytes());
    out.extend_from_slice(&header_u32(table.latent_dim())?.to_le_bytes());
    out.extend_from_slice(&header_u32(table.input_dim())?.to_le_bytes());
    for e in table.entries() {
        out.extend_from_slice(&e.id.to_le_bytes());
        for v in e.latent.iter().chain(&e.original) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_table(mut writer: impl Write, table: &EmbeddingTable) -> Result<(), HenbError> {
    writer.write_all(&to_bytes(table)?)?;
    Ok(())
}

pub fn save_embedding_table(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<(), HenbError> {
    std::fs::write(path, to_bytes(table)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: u32, latent_dim: usize, input_dim: usize) -> EmbeddingTable {
        EmbeddingTable::from_entries(
            latent_dim,
            input_dim,
            "sample",
            (0..n).map(|id| TableEntry {
                id,
                latent: (0..latent_dim).map(|k| (id as f64 + k as f64) * 0.25).collect(),
                original: (0..input_dim).map(|k| k as f64 * 0.5).collect(),
            }),
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let table = sample(3, 16, 5);
        let bytes = to_bytes(&table).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 3 * (4 + 4 * 21));
        let back = parse(&bytes, "sample").unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&sample(2, 1, 1)).unwrap();
        assert_eq!(&bytes[..4], b"HENB");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
    }

    #[test]
    fn distinct_errors() {
        let good = to_bytes(&sample(5, 4, 3)).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(parse(&bad_magic, ""), Err(HenbError::BadMagic)));

        let record_len = 4 + 4 * 7;
        let truncated = &good[..good.len() - record_len];
        assert!(matches!(parse(truncated, ""), Err(HenbError::Truncated { .. })));

        let mut extra = good.clone();
        extra.extend_from_slice(&[0; 4]);
        assert!(matches!(parse(&extra, ""), Err(HenbError::DimensionMismatch { .. })));

        let mut version = good.clone();
        version[4] = 2;
        assert!(matches!(parse(&version, ""), Err(HenbError::UnsupportedVersion(2))));

        let mut dup = good.clone();
        dup[HEADER_LEN + record_len..HEADER_LEN + record_len + 4].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(parse(&dup, ""), Err(HenbError::DuplicateId(0))));
    }

    #[test]
    fn file_round_trip_and_dimension_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.henb");
        let table = sample(3, 16, 8);
        save_embedding_table(&path, &table).unwrap();
        assert_eq!(load_embedding_table(&path).unwrap().len(), 3);
        assert!(load_with_dims(&path, 16, 8).is_ok());
        assert!(matches!(
            load_with_dims(&path, 32, 8),
            Err(HenbError::DimensionMismatch { expected: 32, got: 16 })
        ));
    }
}
