//! `CFL1` flow files: little-endian, magic `CFL1`, `u32` width, `u32` height,
//! row-major `(du, dv)` as `f32` pairs, then one mask byte per pixel.

use std::fs;
use std::path::Path;

use nalgebra::Vector2;

use super::FlowField;
use crate::error::{Error, Result};

pub const CFL_MAGIC: [u8; 4] = *b"CFL1";
const HEADER_LEN: usize = 12;

pub fn encode_cfl(field: &FlowField) -> Vec<u8> {
    let (flow, mask) = field.raw();
    let n = field.width * field.height;
    let mut out = Vec::with_capacity(HEADER_LEN + n * 9);
    out.extend_from_slice(&CFL_MAGIC);
    out.extend_from_slice(&(field.width as u32).to_le_bytes());
    out.extend_from_slice(&(field.height as u32).to_le_bytes());
    for v in flow {
        out.extend_from_slice(&(v.x as f32).to_le_bytes());
        out.extend_from_slice(&(v.y as f32).to_le_bytes());
    }
    out.extend(mask.iter().map(|&m| m as u8));
    out
}

pub fn decode_cfl(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[..4] != CFL_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::CorruptRecord("dimensions overflow".into()))?;
    let expected = HEADER_LEN + n * 9;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::CorruptRecord(format!(
            "{} trailing bytes",
            bytes.len() - expected
        )));
    }

    let flow_bytes = &bytes[HEADER_LEN..HEADER_LEN + n * 8];
    let mask_bytes = &bytes[HEADER_LEN + n * 8..];
    let mut flow = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for (k, (chunk, &m)) in flow_bytes.chunks_exact(8).zip(mask_bytes).enumerate() {
        let du = f32::from_le_bytes(chunk[..4].try_into().unwrap()) as f64;
        let dv = f32::from_le_bytes(chunk[4..].try_into().unwrap()) as f64;
        let valid = match m {
            0 => false,
            1 => true,
            other => {
                return Err(Error::CorruptRecord(format!(
                    "mask byte {other} at pixel {k}"
                )))
            }
        };
        if !valid && (du != 0.0 || dv != 0.0) {
            return Err(Error::CorruptRecord(format!(
                "nonzero flow at masked-out pixel {k}"
            )));
        }
        flow.push(Vector2::new(du, dv));
        mask.push(valid);
    }
    Ok(FlowField::from_parts(width, height, flow, mask))
}

pub fn write_cfl(path: impl AsRef<Path>, field: &FlowField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cfl(field)).map_err(|e| Error::io(path, e))
}

pub fn read_cfl(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cfl(&bytes)
}
