use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{rotation_to_euler, RigidTransform};
use crate::metrics::se3_error;

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMedian {
    pub pose: RigidTransform,
    /// se(3) distance of each input pose from `pose`.
    pub distances: Vec<f64>,
    /// Indices whose distance exceeds the threshold.
    pub outliers: Vec<usize>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn geodesic(a: &RigidTransform, b: &RigidTransform) -> f64 {
    a.inverse().compose(b).rotation_angle()
}

/// Robust reference pose for a sequence of per-frame estimates.
///
/// Translation is the per-axis median. Rotation is the per-angle median of
/// roll, pitch and yaw taken relative to the medoid rotation (the input with
/// the smallest summed geodesic distance to the others), which keeps the
/// angles away from gimbal lock and wrap-around for any mounting.
pub fn sequence_median(poses: &[RigidTransform], outlier_threshold: f64) -> Result<SequenceMedian> {
    if poses.is_empty() {
        return Err(Error::EmptyInput);
    }
    let translation = Vector3::from_fn(|axis, _| {
        median(&mut poses.iter().map(|p| p.translation()[axis]).collect::<Vec<_>>())
    });

    let medoid = (0..poses.len())
        .map(|i| (i, poses.iter().map(|p| geodesic(&poses[i], p)).sum::<f64>()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| poses[i])
        .expect("non-empty");
    let reference = RigidTransform::new(*medoid.rotation(), Vector3::zeros())?;
    let relative: Vec<_> = poses
        .iter()
        .map(|p| rotation_to_euler(&(reference.rotation().transpose() * p.rotation())))
        .collect();
    let roll = median(&mut relative.iter().map(|e| e.roll).collect::<Vec<_>>());
    let pitch = median(&mut relative.iter().map(|e| e.pitch).collect::<Vec<_>>());
    let yaw = median(&mut relative.iter().map(|e| e.yaw).collect::<Vec<_>>());
    let rotation = reference.compose(&RigidTransform::from_euler_zyx(roll, pitch, yaw));
    let pose = RigidTransform::new_orthonormalized(*rotation.rotation(), translation, 1e-9)?;

    let distances: Vec<f64> = poses.iter().map(|p| se3_error(p, &pose)).collect();
    let outliers = distances
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > outlier_threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(SequenceMedian {
        pose,
        distances,
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::forward_left_up_to_camera;

    fn mount() -> RigidTransform {
        RigidTransform::new(forward_left_up_to_camera(), Vector3::new(0.0, -0.08, -0.27)).unwrap()
    }

    #[test]
    fn identical_poses() {
        let poses = vec![mount(); 5];
        let m = sequence_median(&poses, DEFAULT_OUTLIER_THRESHOLD).unwrap();
        assert!((m.pose.translation() - mount().translation()).norm() < 1e-15);
        assert!(geodesic(&m.pose, &mount()) < 1e-12);
        assert!(m.outliers.is_empty());
    }

    #[test]
    fn gross_outlier_is_flagged() {
        let mut poses = vec![mount(); 9];
        poses[4] = RigidTransform::from_euler_zyx(0.5, 0.2, -0.3)
            .compose(&mount())
            .with_translation(Vector3::new(3.0, 1.0, 0.0));
        let m = sequence_median(&poses, DEFAULT_OUTLIER_THRESHOLD).unwrap();
        assert!((m.pose.translation() - mount().translation()).norm() < 1e-15);
        assert!(geodesic(&m.pose, &mount()) < 1e-12);
        assert_eq!(m.outliers, vec![4]);
    }

    #[test]
    fn median_of_translations() {
        let poses: Vec<_> = [1.0, 2.0, 100.0]
            .iter()
            .map(|&x| RigidTransform::from_translation(Vector3::new(x, 0.0, 0.0)))
            .collect();
        assert_eq!(sequence_median(&poses, 0.1).unwrap().pose.translation().x, 2.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(sequence_median(&[], 0.1), Err(Error::EmptyInput)));
    }
}
