//! `XCSRAW01` float rasters and 8/16-bit graymaps.
//!
//! Raster layout: 8-byte magic, 4-byte dtype tag `f64<`, `u32` rank, one `u64`
//! per dimension, then the row-major payload. All integers and floats are
//! little-endian.

use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"XCSRAW01";
pub const DTYPE_F64_LE: &[u8; 4] = b"f64<";

#[derive(Debug, Clone, PartialEq)]
pub struct RawRaster {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl RawRaster {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> CliResult<Self> {
        let expected = dims.iter().product::<usize>();
        if dims.is_empty() || expected != data.len() {
            return Err(CliError::input(format!(
                "raster dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        Ok(RawRaster { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(DTYPE_F64_LE);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let bad = |msg: &str| CliError::input(format!("not a raster: {msg}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing XCSRAW01 header"));
        }
        if &bytes[8..12] != DTYPE_F64_LE {
            return Err(bad("unsupported dtype (only little-endian f64)"));
        }
        let ndim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header = 16 + 8 * ndim;
        if ndim == 0 || bytes.len() < header {
            return Err(bad("truncated dimension list"));
        }
        let dims: Vec<usize> = (0..ndim)
            .map(|k| u64::from_le_bytes(bytes[16 + 8 * k..24 + 8 * k].try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad("dimension product overflows"))?;
        if bytes.len() - header != count * 8 {
            return Err(bad(&format!(
                "payload has {} bytes, dims {dims:?} need {}",
                bytes.len() - header,
                count * 8
            )));
        }
        let data = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(RawRaster { dims, data })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_bytes()).map_err(|e| io_error(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    /// Checks the shape against `expected`, naming `what` in the error.
    pub fn expect_dims(&self, expected: &[usize], what: &str) -> CliResult<()> {
        if self.dims != expected {
            return Err(CliError::input(format!(
                "{what} has dims {:?}, expected {expected:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

/// Binary graymap scaled so the maximum maps to 255. Negative values clip to 0.
pub fn write_pgm(path: &Path, rows: usize, cols: usize, data: &[f64]) -> CliResult<()> {
    let max = data.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(data.iter().map(|&v| {
        if max > 0.0 && v.is_finite() {
            (255.0 * (v / max).clamp(0.0, 1.0)).round() as u8
        } else {
            0
        }
    }));
    fs::write(path, out).map_err(|e| io_error(path, e))
}

/// Reads a P2 or P5 graymap as `(rows, cols, values)`.
pub fn read_pgm(path: &Path) -> CliResult<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    parse_pgm(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn parse_pgm(bytes: &[u8]) -> CliResult<(usize, usize, Vec<f64>)> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CliError::input("truncated graymap header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| CliError::input(format!("bad graymap header field '{s}'")))
    };
    let (cols, rows, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(CliError::input(format!("graymap maxval {maxval} out of range")));
    }
    let n = rows * cols;
    let values: Vec<f64> = match fields[0].as_str() {
        "P5" => {
            let body = &bytes[(pos + 1).min(bytes.len())..];
            let width = if maxval < 256 { 1 } else { 2 };
            if body.len() < n * width {
                return Err(CliError::input("truncated graymap payload"));
            }
            if width == 1 {
                body[..n].iter().map(|&b| b as f64).collect()
            } else {
                body[..2 * n]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                    .collect()
            }
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            let v: Vec<f64> = text
                .split_whitespace()
                .take(n)
                .map(|t| t.parse::<f64>().map_err(|_| CliError::input(format!("bad graymap value '{t}'"))))
                .collect::<CliResult<_>>()?;
            if v.len() != n {
                return Err(CliError::input("truncated graymap payload"));
            }
            v
        }
        other => return Err(CliError::input(format!("unsupported graymap type '{other}'"))),
    };
    Ok((rows, cols, values))
}
