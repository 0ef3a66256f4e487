//! `.matb` binary container: magic `MATB`, version byte, three reserved zero
//! bytes, rows and cols as little-endian u64, then rows·cols little-endian
//! f64 values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matcore::matrix::Matrix;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"MATB";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 24;

pub fn encode<T: Scalar>(m: &Matrix<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &x in m.as_slice() {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    out
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Matrix<T>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected MATB".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != count {
        return Err(Error::Format(format!(
            "payload of {} bytes does not match {rows}x{cols}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| T::from_f64(f64::from_le_bytes(c.try_into().unwrap())).expect("representable"))
        .collect();
    Matrix::from_vec(rows as usize, cols as usize, data)
}

pub fn write<T: Scalar>(path: impl AsRef<Path>, m: &Matrix<T>) -> Result<()> {
    fs::write(path, encode(m))?;
    Ok(())
}

pub fn read<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    decode(&fs::read(path)?)
}
