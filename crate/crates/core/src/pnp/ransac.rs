use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::epnp::epnp;
use super::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

const MINIMAL_SAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Hypotheses drawn per restart.
    pub max_iterations: usize,
    /// Independent restarts; the best hypothesis over all of them wins.
    pub repeats: usize,
    pub inlier_threshold_px: f64,
    pub seed: u64,
    /// Re-estimate with EPnP on the winning inlier set.
    pub refit: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            repeats: 5,
            inlier_threshold_px: 1.0,
            seed: 0,
            refit: true,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.repeats == 0 || !(self.inlier_threshold_px > 0.0) {
            return Err(Error::InvalidArgument(
                "RANSAC iterations, repeats and threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub pose: RigidTransform,
    /// Positions in the input set whose reprojection error under `pose` is
    /// within the threshold, ascending.
    pub inliers: Vec<usize>,
    /// Mean reprojection error over the inliers (pixels).
    pub mean_inlier_error: f64,
}

#[derive(Debug, Clone)]
struct Score {
    inliers: Vec<usize>,
    mean_error: f64,
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        self.inliers.len() > other.inliers.len()
            || (self.inliers.len() == other.inliers.len() && self.mean_error < other.mean_error)
    }
}

fn score(set: &CorrespondenceSet, pose: &RigidTransform, threshold: f64) -> Score {
    let mut inliers = Vec::new();
    let mut sum = 0.0;
    for i in 0..set.len() {
        let e = set.reprojection_error(pose, i);
        if e <= threshold {
            inliers.push(i);
            sum += e;
        }
    }
    let mean_error = if inliers.is_empty() {
        f64::INFINITY
    } else {
        sum / inliers.len() as f64
    };
    Score {
        inliers,
        mean_error,
    }
}

/// EPnP inside RANSAC.
///
/// Each restart `r` draws from its own ChaCha stream `(seed, r)`, so the result
/// depends only on the input order and the seed. Hypotheses are ranked by inlier
/// count, then mean inlier error, then draw order.
pub fn ransac_pnp(set: &CorrespondenceSet, cfg: &RansacConfig) -> Result<RansacResult> {
    cfg.validate()?;
    if set.len() < MINIMAL_SAMPLE {
        return Err(Error::TooFewCorrespondences {
            needed: MINIMAL_SAMPLE,
            got: set.len(),
        });
    }

    let mut best: Option<(RigidTransform, Score)> = None;
    for repeat in 0..cfg.repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(repeat as u64);
        for _ in 0..cfg.max_iterations {
            let mut indices = sample(&mut rng, set.len(), MINIMAL_SAMPLE).into_vec();
            indices.sort_unstable();
            let Ok(hypothesis) = epnp(&set.subset(&indices)) else {
                continue;
            };
            let s = score(set, &hypothesis.pose, cfg.inlier_threshold_px);
            if best.as_ref().map_or(true, |(_, b)| s.better_than(b)) {
                best = Some((hypothesis.pose, s));
            }
        }
    }

    let Some((mut pose, mut best_score)) = best else {
        return Err(Error::RansacFailed);
    };
    if best_score.inliers.len() < MINIMAL_SAMPLE {
        return Err(Error::RansacFailed);
    }

    if cfg.refit {
        if let Ok(refit) = epnp(&set.subset(&best_score.inliers)) {
            let s = score(set, &refit.pose, cfg.inlier_threshold_px);
            if s.inliers.len() >= best_score.inliers.len() {
                pose = refit.pose;
                best_score = s;
            }
        }
    }

    Ok(RansacResult {
        pose,
        inliers: best_score.inliers,
        mean_inlier_error: best_score.mean_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;
    use crate::pnp::Correspondence;
    use nalgebra::{Vector2, Vector3};
    use rand::Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::kitti_odometry()
    }

    fn truth() -> RigidTransform {
        RigidTransform::from_euler_zyx(-0.05, 0.1, 0.2).with_translation(Vector3::new(0.1, -0.3, 0.4))
    }

    fn scene(n: usize, outlier_fraction: f64, seed: u64) -> (CorrespondenceSet, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        let mut is_outlier = Vec::new();
        let inv = truth().inverse();
        let cam = k();
        while pairs.len() < n {
            let px = Vector2::new(rng.random_range(0.0..cam.width as f64), rng.random_range(0.0..cam.height as f64));
            let z = rng.random_range(5.0..40.0);
            let point = inv.transform_point(&cam.back_project(&px, z));
            let outlier = (pairs.len() as f64) < outlier_fraction * n as f64;
            let pixel = if outlier {
                Vector2::new(rng.random_range(0.0..cam.width as f64), rng.random_range(0.0..cam.height as f64))
            } else {
                px
            };
            pairs.push(Correspondence { pixel, point, source_index: pairs.len() });
            is_outlier.push(outlier);
        }
        (CorrespondenceSet::new(cam, pairs), is_outlier)
    }

    #[test]
    fn exact_input_is_all_inliers() {
        let (set, _) = scene(60, 0.0, 1);
        let r = ransac_pnp(&set, &RansacConfig::default()).unwrap();
        assert_eq!(r.inliers.len(), 60);
        assert!((r.pose.translation() - truth().translation()).norm() < 1e-6);
        assert!(r.pose.inverse().compose(&truth()).rotation_angle() < 1e-6);
    }

    #[test]
    fn rejects_thirty_percent_outliers() {
        let (set, is_outlier) = scene(200, 0.3, 2);
        let r = ransac_pnp(&set, &RansacConfig { seed: 9, ..Default::default() }).unwrap();
        assert!((r.pose.translation() - truth().translation()).norm() < 1e-3);
        assert!(r.inliers.iter().all(|&i| !is_outlier[i]));
        for &i in &r.inliers {
            assert!(set.reprojection_error(&r.pose, i) <= 1.0);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let (set, _) = scene(100, 0.3, 3);
        let cfg = RansacConfig { seed: 42, ..Default::default() };
        let a = ransac_pnp(&set, &cfg).unwrap();
        let b = ransac_pnp(&set, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pose.to_row_major().map(f64::to_bits), b.pose.to_row_major().map(f64::to_bits));
    }

    #[test]
    fn too_few_pairs() {
        let (set, _) = scene(3, 0.0, 4);
        assert!(matches!(
            ransac_pnp(&set, &RansacConfig::default()),
            Err(Error::TooFewCorrespondences { .. })
        ));
    }

    #[test]
    fn all_outliers_fail() {
        let (mut set, _) = scene(40, 0.0, 5);
        // Scramble the pixels so no consistent pose exists.
        let pixels: Vec<_> = set.pairs.iter().map(|p| p.pixel).collect();
        for (i, p) in set.pairs.iter_mut().enumerate() {
            p.pixel = pixels[(i * 17 + 5) % pixels.len()];
        }
        assert!(matches!(ransac_pnp(&set, &RansacConfig::default()), Err(Error::RansacFailed)));
    }
}
