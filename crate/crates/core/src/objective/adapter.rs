//! Applying a trained adapter, and its binary parameter file.
//!
//! Parameter file layout, all little-endian:
//!
//! ```text
//! magic        4 bytes  "TPAD"
//! version      u16      1
//! precision    u8       4 (float32 values) or 8 (float64 values)
//! reserved     u8       0
//! dim          u32
//! config_len   u32
//! config       config_len bytes of UTF-8 (training config, TOML)
//! w_text       dim*dim values, row-major
//! w_image      dim*dim values, row-major
//! match_scale, match_bias, temperature
//! ```

use std::fs;
use std::path::Path;

use super::AdapterParams;
use crate::error::{Error, Result};
use crate::store::{EmbeddingMatrix, ZERO_NORM_THRESHOLD};

pub const PARAMS_MAGIC: &[u8; 4] = b"TPAD";
pub const PARAMS_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Text,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn width(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Projects every row through the side's matrix and re-normalizes.
pub fn apply_adapter(m: &EmbeddingMatrix, params: &AdapterParams, side: Side) -> Result<EmbeddingMatrix> {
    params.check()?;
    if m.dim() != params.dim {
        return Err(Error::DimMismatch {
            left: m.dim(),
            right: params.dim,
        });
    }
    let d = params.dim;
    let w = params.projection(side);
    let mut data = Vec::with_capacity(m.rows() * d);
    let mut u = vec![0.0f64; d];
    for (row, x) in m.iter_rows().enumerate() {
        for (a, ua) in u.iter_mut().enumerate() {
            *ua = w[a * d..(a + 1) * d]
                .iter()
                .zip(x)
                .map(|(w, &x)| w * f64::from(x))
                .sum();
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= ZERO_NORM_THRESHOLD {
            return Err(Error::ZeroVector { row, norm });
        }
        data.extend(u.iter().map(|v| (v / norm) as f32));
    }
    EmbeddingMatrix::new(m.rows(), d, data)?.into_normalized()
}

pub fn write_params(path: &Path, params: &AdapterParams, precision: Precision, config: &str) -> Result<()> {
    params.check()?;
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    out.push(precision.width());
    out.push(0);
    out.extend_from_slice(&(params.dim as u32).to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    for v in params.flatten() {
        match precision {
            Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a parameter file, returning the parameters and the embedded config.
pub fn read_params(path: &Path) -> Result<(AdapterParams, String)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let take = |at: usize, len: usize| -> Result<&[u8]> {
        bytes
            .get(at..at + len)
            .ok_or_else(|| bad(format!("truncated at byte {at}")))
    };
    if take(0, 4)? != PARAMS_MAGIC {
        return Err(bad("not an adapter parameter file".into()));
    }
    let version = u16::from_le_bytes(take(4, 2)?.try_into().unwrap());
    if version != PARAMS_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let precision = match take(6, 1)?[0] {
        4 => Precision::F32,
        8 => Precision::F64,
        other => return Err(bad(format!("unknown precision flag {other}"))),
    };
    let dim = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
    let config_len = u32::from_le_bytes(take(12, 4)?.try_into().unwrap()) as usize;
    let config = std::str::from_utf8(take(16, config_len)?)
        .map_err(|e| bad(e.to_string()))?
        .to_string();
    let count = 2 * dim * dim + 3;
    let width = precision.width() as usize;
    let start = 16 + config_len;
    let body = take(start, count * width)?;
    if bytes.len() != start + count * width {
        return Err(bad(format!(
            "expected {} bytes, found {}",
            start + count * width,
            bytes.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(width)
        .map(|c| match precision {
            Precision::F32 => f64::from(f32::from_le_bytes(c.try_into().unwrap())),
            Precision::F64 => f64::from_le_bytes(c.try_into().unwrap()),
        })
        .collect();
    let params = AdapterParams::unflatten(dim, &values)?;
    params.check()?;
    Ok((params, config))
}
