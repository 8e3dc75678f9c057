//! State and axis vector files.
//!
//! Binary: the 8 bytes `QSOPTV01`, a little-endian u64 length, then that many
//! little-endian f64 values. Files ending in `.txt` hold one value per line
//! instead.

use std::path::Path;

use crate::error::CliError;
use crate::output::fmt_f64;

pub const MAGIC: &[u8; 8] = b"QSOPTV01";

pub fn is_text(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt"))
}

pub fn encode_binary(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<f64>, String> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err("missing QSOPTV01 header".into());
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[16..];
    if body.len() as u64 != len.saturating_mul(8) {
        return Err(format!("header says {len} values but {} payload bytes follow", body.len()));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn encode_text(values: &[f64]) -> String {
    let mut s = String::with_capacity(24 * values.len());
    for v in values {
        s.push_str(&fmt_f64(*v));
        s.push('\n');
    }
    s
}

pub fn decode_text(text: &str) -> Result<Vec<f64>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let io = |source| CliError::Io { path: path.into(), source };
    let bad = |reason| CliError::VectorFormat { path: path.into(), reason };
    if is_text(path) {
        decode_text(&std::fs::read_to_string(path).map_err(io)?).map_err(bad)
    } else {
        decode_binary(&std::fs::read(path).map_err(io)?).map_err(bad)
    }
}

pub fn write_vector(path: &Path, values: &[f64]) -> Result<(), CliError> {
    let bytes = if is_text(path) { encode_text(values).into_bytes() } else { encode_binary(values) };
    std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let v = vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 1e300];
        let bytes = encode_binary(&v);
        assert_eq!(&bytes[..8], b"QSOPTV01");
        assert_eq!(bytes.len(), 16 + 32);
        let back = decode_binary(&bytes).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let v = vec![0.1, -1.0 / 3.0, 2.0f64.sqrt()];
        let back = decode_text(&encode_text(&v)).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn malformed_inputs() {
        assert!(decode_binary(b"QSOPTV02\0\0\0\0\0\0\0\0").is_err());
        let mut b = encode_binary(&[1.0, 2.0]);
        b.pop();
        assert!(decode_binary(&b).is_err());
        assert!(decode_text("1.0\nabc\n").unwrap_err().contains("line 2"));
    }
}
