//! Calibration error metrics: translation and rotation errors, per-axis Euler
//! errors, and the se(3)-based MSEE / MRR summaries.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{atan2_paper, rotation_to_euler, Quaternion, RigidTransform};

/// Label attached to reports whose MSEE/MRR follow the RGGNet definitions.
pub const SE3_CONVENTION: &str = "RGGNet-convention";

const UNIT_TOLERANCE: f64 = 1e-6;
const LOG_TAYLOR_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationErrors {
    /// Euclidean distance (m).
    pub e_t: f64,
    pub e_x: f64,
    pub e_y: f64,
    pub e_z: f64,
    /// Mean of the per-axis errors.
    pub mean: f64,
}

pub fn translation_error(pred: &RigidTransform, gt: &RigidTransform) -> TranslationErrors {
    let d = pred.translation() - gt.translation();
    let (e_x, e_y, e_z) = (d.x.abs(), d.y.abs(), d.z.abs());
    TranslationErrors {
        e_t: d.norm(),
        e_x,
        e_y,
        e_z,
        mean: (e_x + e_y + e_z) / 3.0,
    }
}

/// How the quaternion angle distance is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleConvention {
    /// `atan2(‖v‖, |a|)`: half of the rotation angle.
    Paper,
    /// `2·atan2(‖v‖, |a|)`: the rotation angle itself.
    #[default]
    Geodesic,
}

/// Angle of `q_gt * inv(q_pred)` in degrees.
pub fn quaternion_angle_error(
    q_pred: &Quaternion,
    q_gt: &Quaternion,
    convention: AngleConvention,
) -> Result<f64> {
    for q in [q_pred, q_gt] {
        let n = q.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitQuaternion(n));
        }
    }
    let m = *q_gt * q_pred.inverse()?;
    let half = match atan2_paper(m.vector_norm(), m.w.abs()) {
        Ok(a) => a,
        // Only reachable for a zero quaternion, excluded above.
        Err(e) => return Err(e),
    };
    let angle = match convention {
        AngleConvention::Paper => half,
        AngleConvention::Geodesic => 2.0 * half,
    };
    Ok(angle.to_degrees())
}

/// Rotation error between two transforms via their quaternions, in degrees.
pub fn rotation_error(pred: &RigidTransform, gt: &RigidTransform, convention: AngleConvention) -> f64 {
    let qp = Quaternion::from_rotation(pred.rotation());
    let qg = Quaternion::from_rotation(gt.rotation());
    quaternion_angle_error(&qp, &qg, convention).expect("rotation quaternions are unit")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerErrors {
    /// Absolute roll error (degrees).
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub mean: f64,
    pub gimbal_lock: bool,
}

/// Per-axis ZYX Euler angles of `R_pred⁻¹ · R_gt`, absolute, in degrees.
pub fn euler_error(r_pred: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> EulerErrors {
    let e = rotation_to_euler(&(r_pred.transpose() * r_gt));
    let (roll, pitch, yaw) = (
        e.roll.abs().to_degrees(),
        e.pitch.abs().to_degrees(),
        e.yaw.abs().to_degrees(),
    );
    EulerErrors {
        roll,
        pitch,
        yaw,
        mean: (roll + pitch + yaw) / 3.0,
        gimbal_lock: e.gimbal_lock,
    }
}

fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// SO(3) logarithm as a rotation vector (radians).
pub fn so3_log(rotation: &Matrix3<f64>) -> Vector3<f64> {
    let q = Quaternion::from_rotation(rotation);
    let vn = q.vector_norm();
    let v = Vector3::new(q.x, q.y, q.z);
    if vn < LOG_TAYLOR_THRESHOLD {
        // θ ≈ 2‖v‖, axis·θ ≈ 2v/w.
        return v * (2.0 / q.w);
    }
    let theta = 2.0 * vn.atan2(q.w);
    v * (theta / vn)
}

/// SE(3) logarithm stacked as `(ρ, ω)`: translational part first, then the
/// rotation vector.
pub fn se3_log(t: &RigidTransform) -> Vector6<f64> {
    let omega = so3_log(t.rotation());
    let theta = omega.norm();
    let w = hat(&omega);
    let v_inv = if theta < LOG_TAYLOR_THRESHOLD {
        Matrix3::identity() - 0.5 * w + (1.0 / 12.0) * w * w
    } else {
        let half = theta / 2.0;
        let coeff = (1.0 - half * half.cos() / half.sin()) / (theta * theta);
        Matrix3::identity() - 0.5 * w + coeff * w * w
    };
    let rho = v_inv * t.translation();
    Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z)
}

/// `‖log(T_pred⁻¹ · T_gt)‖₂`.
pub fn se3_error(pred: &RigidTransform, gt: &RigidTransform) -> f64 {
    se3_log(&pred.inverse().compose(gt)).norm()
}

/// Mean se(3) error over `(pred, gt)` frames.
pub fn msee(frames: &[(RigidTransform, RigidTransform)]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(frames.iter().map(|(p, g)| se3_error(p, g)).sum::<f64>() / frames.len() as f64)
}

/// Mean re-calibration rate over `(init, pred, gt)` frames, in percent.
///
/// Frames whose initial error is exactly zero carry no information and are
/// skipped with a warning.
pub fn mrr(frames: &[(RigidTransform, RigidTransform, RigidTransform)]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (k, (init, pred, gt)) in frames.iter().enumerate() {
        let e_init = se3_error(init, gt);
        if e_init == 0.0 {
            log::warn!("frame {k}: initial se(3) error is zero, skipped in MRR");
            continue;
        }
        sum += (e_init - se3_error(pred, gt)) / e_init;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument(
            "every frame has zero initial error".into(),
        ));
    }
    Ok(100.0 * sum / used as f64)
}

/// Full error summary of one prediction (or the mean over a sequence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "E_t")]
    pub e_t: f64,
    #[serde(rename = "E_X")]
    pub e_x: f64,
    #[serde(rename = "E_Y")]
    pub e_y: f64,
    #[serde(rename = "E_Z")]
    pub e_z: f64,
    pub t_mean: f64,
    #[serde(rename = "E_R")]
    pub e_r: f64,
    #[serde(rename = "E_Roll")]
    pub e_roll: f64,
    #[serde(rename = "E_Pitch")]
    pub e_pitch: f64,
    #[serde(rename = "E_Yaw")]
    pub e_yaw: f64,
    #[serde(rename = "R_mean")]
    pub r_mean: f64,
    #[serde(rename = "MSEE", skip_serializing_if = "Option::is_none", default)]
    pub msee: Option<f64>,
    #[serde(rename = "MRR", skip_serializing_if = "Option::is_none", default)]
    pub mrr: Option<f64>,
    pub angle_convention: AngleConvention,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub se3_convention: Option<String>,
}

impl MetricsReport {
    /// Errors of `pred` against `gt`; MSEE is always filled, MRR only with `init`.
    pub fn evaluate(
        pred: &RigidTransform,
        gt: &RigidTransform,
        init: Option<&RigidTransform>,
        convention: AngleConvention,
    ) -> Self {
        let t = translation_error(pred, gt);
        let e = euler_error(pred.rotation(), gt.rotation());
        let mrr = init.and_then(|i| mrr(&[(*i, *pred, *gt)]).ok());
        Self {
            e_t: t.e_t,
            e_x: t.e_x,
            e_y: t.e_y,
            e_z: t.e_z,
            t_mean: t.mean,
            e_r: rotation_error(pred, gt, convention),
            e_roll: e.roll,
            e_pitch: e.pitch,
            e_yaw: e.yaw,
            r_mean: e.mean,
            msee: Some(se3_error(pred, gt)),
            mrr,
            angle_convention: convention,
            se3_convention: Some(SE3_CONVENTION.to_string()),
        }
    }

    /// Field-wise mean over frames; MSEE is the mean se(3) error and MRR is
    /// computed over the frames that carry an initial pose.
    pub fn aggregate(
        frames: &[(Option<RigidTransform>, RigidTransform, RigidTransform)],
        convention: AngleConvention,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput);
        }
        let reports: Vec<Self> = frames
            .iter()
            .map(|(_, p, g)| Self::evaluate(p, g, None, convention))
            .collect();
        let n = reports.len() as f64;
        let mean = |f: fn(&Self) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let with_init: Vec<_> = frames
            .iter()
            .filter_map(|(i, p, g)| i.map(|i| (i, *p, *g)))
            .collect();
        let pairs: Vec<_> = frames.iter().map(|(_, p, g)| (*p, *g)).collect();
        Ok(Self {
            e_t: mean(|r| r.e_t),
            e_x: mean(|r| r.e_x),
            e_y: mean(|r| r.e_y),
            e_z: mean(|r| r.e_z),
            t_mean: mean(|r| r.t_mean),
            e_r: mean(|r| r.e_r),
            e_roll: mean(|r| r.e_roll),
            e_pitch: mean(|r| r.e_pitch),
            e_yaw: mean(|r| r.e_yaw),
            r_mean: mean(|r| r.r_mean),
            msee: Some(msee(&pairs)?),
            mrr: if with_init.is_empty() {
                None
            } else {
                mrr(&with_init).ok()
            },
            angle_convention: convention,
            se3_convention: Some(SE3_CONVENTION.to_string()),
        })
    }

    /// Fixed-width text table; translations in centimetres, angles in degrees.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>14}", "metric", "value");
        let rows: [(&str, f64, &str); 10] = [
            ("E_t", self.e_t * 100.0, "cm"),
            ("E_X", self.e_x * 100.0, "cm"),
            ("E_Y", self.e_y * 100.0, "cm"),
            ("E_Z", self.e_z * 100.0, "cm"),
            ("t_mean", self.t_mean * 100.0, "cm"),
            ("E_R", self.e_r, "deg"),
            ("E_Roll", self.e_roll, "deg"),
            ("E_Pitch", self.e_pitch, "deg"),
            ("E_Yaw", self.e_yaw, "deg"),
            ("R_mean", self.r_mean, "deg"),
        ];
        for (name, value, unit) in rows {
            let _ = writeln!(s, "{name:<10} {value:>14.6} {unit}");
        }
        if let Some(v) = self.msee {
            let _ = writeln!(s, "{:<10} {:>14.6}", "MSEE", v);
        }
        if let Some(v) = self.mrr {
            let _ = writeln!(s, "{:<10} {:>13.2}%", "MRR", v);
        }
        s
    }
}
