//! Sample files.
//!
//! Two encodings are accepted on read and chosen by content:
//!
//! * CSV text: one point per line, `d` comma-separated decimals. Blank lines
//!   and lines starting with `#` are skipped.
//! * Binary: magic `EOTD`, version byte `1`, `n` and `d` as little-endian
//!   `u32`, then `n·d` little-endian IEEE-754 `f64` in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use neural_eot::numerics::RealMatrix;

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"EOTD";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

pub fn read_points(path: &Path) -> Result<RealMatrix, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| "file is neither EOTD binary nor UTF-8 CSV".to_string());
        text.and_then(decode_csv)
    };
    parsed.map_err(|msg| CliError::Input(format!("{}: {msg}", path.display())))
}

pub fn decode_csv(text: &str) -> Result<RealMatrix, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| field.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!(
                    "line {}: {} values, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    RealMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

pub fn decode_binary(bytes: &[u8]) -> Result<RealMatrix, String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err("truncated EOTD header".into());
    }
    if bytes[4] != VERSION {
        return Err(format!("unsupported EOTD version {}", bytes[4]));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != n * d * 8 {
        return Err(format!(
            "EOTD body holds {} bytes, header promises {n}x{d} reals",
            body.len()
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    RealMatrix::new(n, d, data).map_err(|e| e.to_string())
}

pub fn encode_binary(x: &RealMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + x.data().len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(x.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(x.cols() as u32).to_le_bytes());
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// CSV text with shortest round-trip formatting of every value.
pub fn encode_csv(x: &RealMatrix) -> String {
    let mut out = String::new();
    for row in x.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

/// Writes points as CSV, or as EOTD binary when the extension is `.eotd` / `.bin`.
pub fn write_points(path: &Path, x: &RealMatrix) -> Result<(), CliError> {
    let binary = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("eotd") | Some("bin")
    );
    if binary {
        write_file(path, &encode_binary(x))
    } else {
        write_file(path, encode_csv(x).as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsing() {
        let m = decode_csv("# header\n1.0, 2\n\n-3.5,4e-1\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.data(), &[1.0, 2.0, -3.5, 0.4]);
        assert!(decode_csv("1,2\n3\n").is_err());
        assert!(decode_csv("1,x\n").is_err());
        assert!(decode_csv("# only a comment\n").is_err());
        assert!(decode_csv("nan\n").is_err());
    }

    #[test]
    fn binary_layout() {
        let m = RealMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.25], vec![0.0, 1e-300]]).unwrap();
        let bytes = encode_binary(&m);
        assert_eq!(&bytes[..5], b"EOTD\x01");
        assert_eq!(&bytes[5..9], &3u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &2u32.to_le_bytes());
        assert_eq!(&bytes[13..21], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 13 + 6 * 8);
        assert_eq!(decode_binary(&bytes).unwrap(), m);
        assert!(decode_binary(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 2;
        assert!(decode_binary(&wrong_version).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = RealMatrix::from_rows(&[vec![0.1 + 0.2, -1.0 / 3.0], vec![1e-17, 12345.678]]).unwrap();
        assert_eq!(decode_csv(&encode_csv(&m)).unwrap(), m);
    }
}
