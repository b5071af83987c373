//! Binary matrix container shared by trajectories, bases and GP blobs.
//!
//! Byte layout (all little-endian):
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 8    | magic `PODGPR01`                 |
//! | 8      | 8    | `u64` row count (N_h for fields) |
//! | 16     | 8    | `u64` column count (N_t)         |
//! | 24     | 8    | `f64` time step (0 if unused)    |
//! | 32     | 8·r·c| `f64` payload, column-major      |

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PODGPR01";
const HEADER_LEN: usize = 32;

pub fn encode(matrix: &DMatrix<f64>, dt: f64) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * matrix.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.ncols() as u64).to_le_bytes());
    buf.extend_from_slice(&dt.to_le_bytes());
    // nalgebra storage is column-major already
    for v in matrix.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(DMatrix<f64>, f64)> {
    let corrupt = |reason: &str| Error::CorruptContainer {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&bytes[i..i + 8]).unwrap();
    let rows = u64::from_le_bytes(word(8)) as usize;
    let cols = u64::from_le_bytes(word(16)) as usize;
    let dt = f64::from_le_bytes(word(24));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| corrupt("size overflow"))?;
    if bytes.len() != HEADER_LEN + expected {
        return Err(corrupt("payload length does not match header"));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((DMatrix::from_vec(rows, cols, data), dt))
}

pub fn write_matrix(path: &Path, matrix: &DMatrix<f64>, dt: f64) -> Result<()> {
    fs::write(path, encode(matrix, dt))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(DMatrix<f64>, f64)> {
    let bytes = fs::read(path)?;
    decode(&bytes, path)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = DMatrix::from_column_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bytes = encode(&m, 0.005);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 0.005);
        // second payload value is row 1 of column 0
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), 2.0);
    }

    #[test]
    fn rejects_truncated_payload() {
        let m = DMatrix::from_element(3, 3, 1.0);
        let bytes = encode(&m, 0.0);
        let err = decode(&bytes[..bytes.len() - 1], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::CorruptContainer { .. }));
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 0usize..6, cols in 0usize..6, dt in -1.0f64..1.0, seed in any::<u64>()) {
            let m = DMatrix::from_fn(rows, cols, |i, j| (seed as f64).sin() * (i as f64 + 1.5) - j as f64);
            let (back, dt_back) = decode(&encode(&m, dt), Path::new("mem")).unwrap();
            prop_assert_eq!(back, m);
            prop_assert_eq!(dt_back.to_bits(), dt.to_bits());
        }
    }
}
