use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::pose::POSE_TOLERANCE;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};

/// Contents of a KITTI-style calibration file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    /// Camera-from-LiDAR extrinsic (`Tr`).
    pub extrinsic: RigidTransform,
}

fn numbers(line: &str, key: &str, n: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(key, format!("non-numeric token `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n {
        return Err(Error::parse(key, format!("expected {n} values, found {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(key, "non-finite value"));
    }
    Ok(values)
}

/// Reads `P2` (3×4 projection), `Tr` (3×4 extrinsic) and the optional image
/// size line `S2: width height`. Other keys are ignored. Without `S2` the
/// KITTI odometry image size is assumed.
pub fn parse_calib(text: &str) -> Result<Calibration> {
    let mut p2 = None;
    let mut tr = None;
    let mut size = None;
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        match key.trim() {
            "P2" => p2 = Some(numbers(rest, "P2", 12)?),
            "Tr" | "Tr_velo_to_cam" => tr = Some(numbers(rest, "Tr", 12)?),
            "S2" => size = Some(numbers(rest, "S2", 2)?),
            _ => {}
        }
    }
    let p2 = p2.ok_or_else(|| Error::MissingKey("P2".into()))?;
    let tr = tr.ok_or_else(|| Error::MissingKey("Tr".into()))?;

    let kitti = CameraIntrinsics::kitti_odometry();
    let (width, height) = match size {
        Some(s) => {
            if s.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
                return Err(Error::parse("S2", "image size must be positive integers"));
            }
            (s[0] as usize, s[1] as usize)
        }
        None => (kitti.width, kitti.height),
    };
    // P2 = K [I | b]; the intrinsics are its left 3×3 block.
    let k = Matrix3::new(p2[0], p2[1], p2[2], p2[4], p2[5], p2[6], p2[8], p2[9], p2[10]);
    if k[(0, 1)].abs() > 1e-9 || k[(1, 0)].abs() > 1e-9 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
        return Err(Error::InvalidIntrinsics("P2 is not of the form K[I|b]".into()));
    }
    let intrinsics = CameraIntrinsics::new(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)], width, height)?;
    let values: [f64; 12] = tr.try_into().expect("length checked");
    let extrinsic = RigidTransform::from_row_major(&values, POSE_TOLERANCE)?;
    Ok(Calibration { intrinsics, extrinsic })
}

pub fn load_calib(path: impl AsRef<Path>) -> Result<Calibration> {
    let path = path.as_ref();
    parse_calib(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_calib(path: impl AsRef<Path>, calib: &Calibration) -> Result<()> {
    let k = &calib.intrinsics;
    let mut s = String::new();
    let p2 = [k.fx, 0.0, k.cx, 0.0, 0.0, k.fy, k.cy, 0.0, 0.0, 0.0, 1.0, 0.0];
    let row = |vals: &[f64]| vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "P2: {}", row(&p2));
    let _ = writeln!(s, "Tr: {}", row(&calib.extrinsic.to_row_major()));
    let _ = writeln!(s, "S2: {} {}", k.width, k.height);
    let path = path.as_ref();
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

impl Calibration {
    /// Principal ray of the camera expressed in the LiDAR frame.
    pub fn optical_axis_in_lidar(&self) -> Vector3<f64> {
        self.extrinsic.rotation().transpose() * Vector3::z()
    }
}
