use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

/// Tolerance applied to `R·Rᵀ = I` and `det(R) = 1` when constructing a transform.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Rigid transform in SE(3), mapping points from a source frame into a target frame.
///
/// Extrinsics are stored camera-from-LiDAR: `p_cam = R · p_lidar + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Builds a transform, rejecting rotations that are not orthonormal with `det = +1`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let deviation = orthonormality_error(&rotation);
        if !deviation.is_finite() || deviation > ORTHONORMAL_TOLERANCE {
            return Err(Error::InvalidRotation(format!(
                "orthonormality deviation {deviation:.3e}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Accepts a rotation within `tolerance` of SO(3) and projects it onto the
    /// nearest rotation (in the Frobenius sense) when it is not already exact.
    pub fn new_orthonormalized(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        let deviation = orthonormality_error(&rotation);
        if !deviation.is_finite() || deviation > tolerance {
            return Err(Error::InvalidRotation(format!(
                "orthonormality deviation {deviation:.3e} exceeds {tolerance:.1e}"
            )));
        }
        let rotation = if deviation > 1e-12 {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        Self::new(rotation, translation)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally), zero translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// `R = Rz(yaw) · Ry(pitch) · Rx(roll)`, zero translation.
    pub fn from_euler_zyx(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            rotation: super::euler_to_rotation(roll, pitch, yaw),
            translation: Vector3::zeros(),
        }
    }

    pub fn with_translation(mut self, translation: Vector3<f64>) -> Self {
        self.translation = translation;
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major `[R | t]`, the layout of KITTI pose and calibration records.
    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 4 + c] = self.rotation[(r, c)];
            }
            out[r * 4 + 3] = self.translation[r];
        }
        out
    }

    /// Parses a row-major `[R | t]`; the rotation must lie within `tolerance` of SO(3).
    pub fn from_row_major(values: &[f64; 12], tolerance: f64) -> Result<Self> {
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8],
            values[9], values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        Self::new_orthonormalized(rotation, translation, tolerance)
    }

    /// Geodesic rotation angle of this transform, in radians.
    pub fn rotation_angle(&self) -> f64 {
        let cos = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos()
    }
}

/// Largest of `‖R·Rᵀ − I‖_max` and `|det R − 1|`.
pub fn orthonormality_error(rotation: &Matrix3<f64>) -> f64 {
    let gram = rotation * rotation.transpose() - Matrix3::identity();
    let max = gram.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    max.max((rotation.determinant() - 1.0).abs())
}

/// Closest proper rotation to `m` via SVD.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}
