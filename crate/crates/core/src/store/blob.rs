//! Embedding blob file format.
//!
//! Header: magic `MMEM`, version u32, dim u32, count u64, all
//! little-endian; payload is exactly count*dim little-endian f32 values.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MMEM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// Serialize `count` rows of `dim` f32 values.
pub fn encode_blob(dim: usize, rows: &[Vec<f32>]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + rows.len() * dim * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for row in rows {
        if row.len() != dim {
            return Err(Error::Shape(format!(
                "blob row has dimension {}, expected {dim}",
                row.len()
            )));
        }
        for x in row {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parse a blob, validating magic, version and exact payload length.
/// `name` labels corruption errors.
pub fn decode_blob(bytes: &[u8], name: &str) -> Result<(usize, Vec<Vec<f32>>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corruption(format!("{name}: shorter than header")));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Corruption(format!(
            "{name}: bad magic {:?}, expected \"MMEM\"",
            &bytes[0..4]
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Corruption(format!(
            "{name}: unsupported blob version {version}"
        )));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + count * dim * 4;
    if bytes.len() != expected {
        return Err(Error::Corruption(format!(
            "{name}: payload length {} does not match header ({count} x {dim} f32)",
            bytes.len() - HEADER_LEN
        )));
    }
    let mut rows = Vec::with_capacity(count);
    let mut offset = HEADER_LEN;
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(f32::from_le_bytes(
                bytes[offset..offset + 4].try_into().unwrap(),
            ));
            offset += 4;
        }
        rows.push(row);
    }
    Ok((dim, rows))
}
