use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

const RECORD: usize = 16;

/// Decodes little-endian `f32` quadruples `(x, y, z, reflectance)`.
pub fn decode_velodyne(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::CorruptRecord(format!(
            "{} bytes is not a whole number of {RECORD}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD;
    let mut points = Vec::with_capacity(n);
    let mut reflectance = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::CorruptRecord(format!("non-finite coordinate in record {i}")));
        }
        points.push(Vector3::new(x as f64, y as f64, z as f64));
        reflectance.push(r);
    }
    Ok(PointCloud {
        points,
        labels: None,
        reflectance: Some(reflectance),
    })
}

/// Encodes as `f32` records; missing reflectance is written as zero.
pub fn encode_velodyne(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD);
    for (i, p) in cloud.points.iter().enumerate() {
        let r = cloud.reflectance.as_ref().and_then(|r| r.get(i)).copied().unwrap_or(0.0);
        for v in [p.x as f32, p.y as f32, p.z as f32, r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_velodyne_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    decode_velodyne(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_velodyne_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_velodyne(cloud)).map_err(|e| Error::io(path, e))
}
