//! Perspective-n-Point solvers and the robust RANSAC wrapper.

mod epnp;
mod horn;
mod p3p;
mod poly;
mod ransac;

pub use epnp::epnp;
pub use horn::absolute_orientation;
pub use p3p::{p3p, p3p_candidates};
pub use poly::real_roots;
pub use ransac::{ransac_pnp, RansacConfig, RansacResult};

use nalgebra::{Vector2, Vector3};

use crate::geometry::{CameraIntrinsics, RigidTransform};

/// One image pixel matched to one LiDAR point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: Vector2<f64>,
    pub point: Vector3<f64>,
    /// Index of `point` in the originating point cloud.
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub intrinsics: CameraIntrinsics,
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(intrinsics: CameraIntrinsics, pairs: Vec<Correspondence>) -> Self {
        Self { intrinsics, pairs }
    }

    /// Builds a set from parallel pixel/point lists; source indices are positions.
    pub fn from_pairs(
        intrinsics: CameraIntrinsics,
        pixels: &[Vector2<f64>],
        points: &[Vector3<f64>],
    ) -> Self {
        let pairs = pixels
            .iter()
            .zip(points)
            .enumerate()
            .map(|(i, (pixel, point))| Correspondence {
                pixel: *pixel,
                point: *point,
                source_index: i,
            })
            .collect();
        Self::new(intrinsics, pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> CorrespondenceSet {
        Self::new(
            self.intrinsics,
            indices.iter().map(|&i| self.pairs[i]).collect(),
        )
    }

    /// Pixel distance between the observed pixel of pair `i` and its reprojection
    /// under `pose`; infinite when the point lands behind the camera.
    pub fn reprojection_error(&self, pose: &RigidTransform, i: usize) -> f64 {
        reprojection_error(&self.intrinsics, pose, &self.pairs[i])
    }

    /// Root-mean-square reprojection error over all pairs.
    pub fn rms_error(&self, pose: &RigidTransform) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let sum: f64 = (0..self.len())
            .map(|i| self.reprojection_error(pose, i).powi(2))
            .sum();
        (sum / self.len() as f64).sqrt()
    }
}

pub(crate) fn reprojection_error(
    intrinsics: &CameraIntrinsics,
    pose: &RigidTransform,
    pair: &Correspondence,
) -> f64 {
    let pc = pose.transform_point(&pair.point);
    if pc.z <= 0.0 {
        return f64::INFINITY;
    }
    (intrinsics.project(&pc) - pair.pixel).norm()
}

/// A pose estimate together with its reprojection RMS (pixels) on the input set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpSolution {
    pub pose: RigidTransform,
    pub rms_px: f64,
}
