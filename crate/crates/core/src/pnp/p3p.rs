//! Grunert's three-point pose: the law of cosines on the three viewing rays
//! reduces to a quartic in the ratio of two ray lengths.

use nalgebra::Vector3;

use super::horn::absolute_orientation;
use super::poly::real_roots;
use super::{reprojection_error, Correspondence, CorrespondenceSet, PnpSolution};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};

const COLLINEAR_SINE: f64 = 1e-9;

/// Every physically valid pose (positive ray lengths) explaining three
/// correspondences exactly.
pub fn p3p_candidates(
    intrinsics: &CameraIntrinsics,
    pairs: &[Correspondence; 3],
) -> Result<Vec<RigidTransform>> {
    let [p1, p2, p3] = [pairs[0].point, pairs[1].point, pairs[2].point];
    let e12 = p2 - p1;
    let e13 = p3 - p1;
    if e12.cross(&e13).norm() <= COLLINEAR_SINE * e12.norm() * e13.norm() || e12.norm() == 0.0 {
        return Err(Error::Degenerate);
    }

    let ray = |c: &Correspondence| {
        let n = intrinsics.normalize(&c.pixel);
        Vector3::new(n.x, n.y, 1.0).normalize()
    };
    let [j1, j2, j3] = [ray(&pairs[0]), ray(&pairs[1]), ray(&pairs[2])];

    let a2 = (p2 - p3).norm_squared();
    let b2 = (p1 - p3).norm_squared();
    let c2 = (p1 - p2).norm_squared();
    let cos_a = j2.dot(&j3);
    let cos_b = j1.dot(&j3);
    let cos_g = j1.dot(&j2);

    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let bmc = (b2 - c2) / b2;
    let bma = (b2 - a2) / b2;

    let q4 = (amc - 1.0).powi(2) - 4.0 * c2 / b2 * cos_a * cos_a;
    let q3 = 4.0
        * (amc * (1.0 - amc) * cos_b - (1.0 - apc) * cos_a * cos_g
            + 2.0 * c2 / b2 * cos_a * cos_a * cos_b);
    let q2 = 2.0
        * (amc * amc - 1.0 + 2.0 * amc * amc * cos_b * cos_b + 2.0 * bmc * cos_a * cos_a
            - 4.0 * apc * cos_a * cos_b * cos_g
            + 2.0 * bma * cos_g * cos_g);
    let q1 = 4.0
        * (-amc * (1.0 + amc) * cos_b + 2.0 * a2 / b2 * cos_g * cos_g * cos_b
            - (1.0 - apc) * cos_a * cos_g);
    let q0 = (1.0 + amc).powi(2) - 4.0 * a2 / b2 * cos_g * cos_g;

    let world = [p1, p2, p3];
    let mut poses = Vec::new();
    for v in real_roots(&[q4, q3, q2, q1, q0]) {
        let denom = 2.0 * (cos_g - v * cos_a);
        if denom.abs() < 1e-14 {
            continue;
        }
        let u = ((amc - 1.0) * v * v - 2.0 * amc * cos_b * v + 1.0 + amc) / denom;
        let s1_sq = c2 / (1.0 + u * u - 2.0 * u * cos_g);
        if !(s1_sq > 0.0) || u <= 0.0 || v <= 0.0 {
            continue;
        }
        let s1 = s1_sq.sqrt();
        let cam = [j1 * s1, j2 * (u * s1), j3 * (v * s1)];
        if let Some(pose) = absolute_orientation(&world, &cam) {
            poses.push(pose);
        }
    }
    Ok(poses)
}

/// Pose from exactly three correspondences. The root with the smallest
/// reprojection error on `disambiguator` wins, or on the three inputs when none
/// is given; ties keep the earlier root.
pub fn p3p(set: &CorrespondenceSet, disambiguator: Option<&Correspondence>) -> Result<PnpSolution> {
    if set.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "P3P takes exactly 3 correspondences, got {}",
            set.len()
        )));
    }
    let triple = [set.pairs[0], set.pairs[1], set.pairs[2]];
    let candidates = p3p_candidates(&set.intrinsics, &triple)?;
    let score = |pose: &RigidTransform| match disambiguator {
        Some(extra) => reprojection_error(&set.intrinsics, pose, extra),
        None => set.rms_error(pose),
    };
    candidates
        .into_iter()
        .map(|pose| (score(&pose), pose))
        .fold(None::<(f64, RigidTransform)>, |best, (s, pose)| match best {
            Some((bs, _)) if bs <= s => best,
            _ => Some((s, pose)),
        })
        .map(|(_, pose)| PnpSolution {
            rms_px: set.rms_error(&pose),
            pose,
        })
        .ok_or(Error::Degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::kitti_odometry()
    }

    fn corr(pose: &RigidTransform, p: Vector3<f64>, i: usize) -> Correspondence {
        Correspondence {
            pixel: k().project(&pose.transform_point(&p)),
            point: p,
            source_index: i,
        }
    }

    fn pose() -> RigidTransform {
        RigidTransform::from_euler_zyx(0.05, 0.2, -0.1).with_translation(Vector3::new(-0.4, 0.1, 0.5))
    }

    fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        a.inverse().compose(b).rotation_angle() < tol
            && (a.translation() - b.translation()).norm() < tol
    }

    #[test]
    fn three_points_with_disambiguator() {
        let pts = [
            Vector3::new(-1.0, 0.5, 9.0),
            Vector3::new(2.0, -0.3, 12.0),
            Vector3::new(0.2, 1.1, 7.0),
        ];
        let set = CorrespondenceSet::new(k(), pts.iter().enumerate().map(|(i, p)| corr(&pose(), *p, i)).collect());
        let extra = corr(&pose(), Vector3::new(0.7, -0.9, 14.0), 3);
        let sol = p3p(&set, Some(&extra)).unwrap();
        assert!(close(&sol.pose, &pose(), 1e-6));
    }

    #[test]
    fn equilateral_triangle_pose_is_among_roots() {
        let h = 3f64.sqrt() / 2.0;
        let pts = [Vector3::new(0.0, 1.0, 0.0), Vector3::new(-h, -0.5, 0.0), Vector3::new(h, -0.5, 0.0)];
        let truth = RigidTransform::from_euler_zyx(0.1, -0.05, 0.0).with_translation(Vector3::new(0.2, 0.0, 6.0));
        let triple = [corr(&truth, pts[0], 0), corr(&truth, pts[1], 1), corr(&truth, pts[2], 2)];
        let roots = p3p_candidates(&k(), &triple).unwrap();
        assert!(!roots.is_empty() && roots.len() <= 4);
        // Brute-force check: every root reprojects the triple exactly.
        for r in &roots {
            for c in &triple {
                assert!(reprojection_error(&k(), r, c) < 1e-6);
            }
        }
        assert!(roots.iter().any(|r| close(r, &truth, 1e-6)));
    }

    #[test]
    fn collinear_triple_is_degenerate() {
        let triple = [
            corr(&pose(), Vector3::new(0.0, 0.0, 10.0), 0),
            corr(&pose(), Vector3::new(1.0, 1.0, 11.0), 1),
            corr(&pose(), Vector3::new(2.0, 2.0, 12.0), 2),
        ];
        assert!(matches!(p3p_candidates(&k(), &triple), Err(Error::Degenerate)));
    }

    #[test]
    fn requires_exactly_three() {
        let set = CorrespondenceSet::new(k(), vec![corr(&pose(), Vector3::new(0.0, 0.0, 10.0), 0); 4]);
        assert!(p3p(&set, None).is_err());
    }
}
