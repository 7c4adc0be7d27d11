use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// Four-quadrant arctangent with the six explicit branches, including the
/// undefined origin.
pub fn atan2_paper(y: f64, x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok((y / x).atan())
    } else if x < 0.0 && y >= 0.0 {
        Ok((y / x).atan() + PI)
    } else if x < 0.0 {
        Ok((y / x).atan() - PI)
    } else if y > 0.0 {
        Ok(FRAC_PI_2)
    } else if y < 0.0 {
        Ok(-FRAC_PI_2)
    } else {
        Err(Error::Atan2Undefined)
    }
}

/// ZYX Euler angles in radians: `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Set when `|pitch| = π/2`; roll is then pinned to zero and yaw absorbs the
    /// coupled rotation.
    pub gimbal_lock: bool,
}

const GIMBAL_EPS: f64 = 1e-12;

pub fn rotation_to_euler(r: &Matrix3<f64>) -> EulerAngles {
    let cos_pitch = (r[(2, 1)] * r[(2, 1)] + r[(2, 2)] * r[(2, 2)]).sqrt();
    if cos_pitch < GIMBAL_EPS {
        let pitch = if r[(2, 0)] < 0.0 { FRAC_PI_2 } else { -FRAC_PI_2 };
        return EulerAngles {
            roll: 0.0,
            pitch,
            yaw: (-r[(0, 1)]).atan2(r[(1, 1)]),
            gimbal_lock: true,
        };
    }
    EulerAngles {
        roll: r[(2, 1)].atan2(r[(2, 2)]),
        pitch: (-r[(2, 0)]).atan2(cos_pitch),
        yaw: r[(1, 0)].atan2(r[(0, 0)]),
        gimbal_lock: false,
    }
}

pub fn euler_to_rotation(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}
