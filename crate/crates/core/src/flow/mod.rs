//! Calibration flow: the per-pixel displacement from an initial projection of
//! the point cloud to its ground-truth projection.

mod cfl;
mod loss;

pub use cfl::{decode_cfl, encode_cfl, read_cfl, write_cfl, CFL_MAGIC};
pub use loss::{charbonnier, photometric_loss, smoothness_loss, smoothness_term, LossConfig};

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{
    project, CameraIntrinsics, CropWindow, PointCloud, ProjectedCloud, RigidTransform, ZBuffer,
};
use crate::pnp::{Correspondence, CorrespondenceSet};

/// Dense two-channel displacement image with a validity mask.
///
/// Pixels outside the mask always carry `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    flow: Vec<Vector2<f64>>,
    mask: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            flow: vec![Vector2::zeros(); width * height],
            mask: vec![false; width * height],
        }
    }

    #[inline]
    fn offset(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    /// Flow at `(x, y)`, or `None` where the mask is unset.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<Vector2<f64>> {
        let k = self.offset(x, y);
        self.mask[k].then_some(self.flow[k])
    }

    /// Raw value at `(x, y)`; zero outside the mask.
    #[inline]
    pub fn value(&self, x: usize, y: usize) -> Vector2<f64> {
        self.flow[self.offset(x, y)]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[self.offset(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, value: Vector2<f64>) {
        let k = self.offset(x, y);
        self.flow[k] = value;
        self.mask[k] = true;
    }

    pub fn clear(&mut self, x: usize, y: usize) {
        let k = self.offset(x, y);
        self.flow[k] = Vector2::zeros();
        self.mask[k] = false;
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(x, y, flow)` for every masked pixel, row-major.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, Vector2<f64>)> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(k, _)| (k % self.width, k / self.width, self.flow[k]))
    }

    /// Applies `f` to every masked value in place.
    pub fn map_valid(&mut self, mut f: impl FnMut(usize, usize, Vector2<f64>) -> Vector2<f64>) {
        for k in 0..self.flow.len() {
            if self.mask[k] {
                self.flow[k] = f(k % self.width, k / self.width, self.flow[k]);
            }
        }
    }

    pub fn crop(&self, window: &CropWindow) -> FlowField {
        let mut out = FlowField::zeros(window.width, window.height);
        for y in 0..window.height {
            for x in 0..window.width {
                let k = self.offset(window.x0 + x, window.y0 + y);
                let j = y * window.width + x;
                out.flow[j] = self.flow[k];
                out.mask[j] = self.mask[k];
            }
        }
        out
    }

    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        flow: Vec<Vector2<f64>>,
        mask: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(flow.len(), width * height);
        debug_assert_eq!(mask.len(), width * height);
        Self {
            width,
            height,
            flow,
            mask,
        }
    }

    pub(crate) fn raw(&self) -> (&[Vector2<f64>], &[bool]) {
        (&self.flow, &self.mask)
    }
}

/// Ground-truth calibration flow between two projections of the same cloud.
///
/// Each pixel of the initial z-buffer is owned by its nearest point; the pixel
/// receives `p_gt − p_init` of that point when the point is also valid under the
/// ground truth, and stays masked out otherwise.
pub fn flow_between(init: &ProjectedCloud, gt: &ProjectedCloud) -> Result<FlowField> {
    if init.points.len() != gt.points.len() {
        return Err(Error::InvalidArgument(format!(
            "projections cover {} and {} points",
            init.points.len(),
            gt.points.len()
        )));
    }
    if (init.width, init.height) != (gt.width, gt.height) {
        return Err(Error::DimensionMismatch {
            expected: (init.width, init.height),
            actual: (gt.width, gt.height),
        });
    }
    let zbuffer = ZBuffer::build(init);
    let mut field = FlowField::zeros(init.width, init.height);
    for (x, y, i) in zbuffer.occupied() {
        let target = &gt.points[i];
        if target.valid {
            field.set(x, y, target.pixel - init.points[i].pixel);
        }
    }
    Ok(field)
}

pub fn ground_truth_flow(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    t_init: &RigidTransform,
    t_gt: &RigidTransform,
) -> Result<FlowField> {
    let init = project(cloud, intrinsics, t_init)?;
    let gt = project(cloud, intrinsics, t_gt)?;
    flow_between(&init, &gt)
}

/// Shifts each visible initial projection by the flow at its pixel and pairs the
/// result with its 3D point. The flow covers the whole image.
pub fn rectify(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    projected: &ProjectedCloud,
    flow: &FlowField,
) -> Result<CorrespondenceSet> {
    rectify_in_window(
        cloud,
        intrinsics,
        projected,
        flow,
        &CropWindow::full(projected.width, projected.height),
    )
}

/// As [`rectify`], with `flow` covering only `window` of the image. Points whose
/// pixel falls outside the window receive no flow and are skipped.
pub fn rectify_in_window(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    projected: &ProjectedCloud,
    flow: &FlowField,
    window: &CropWindow,
) -> Result<CorrespondenceSet> {
    if (flow.width, flow.height) != (window.width, window.height) {
        return Err(Error::DimensionMismatch {
            expected: (window.width, window.height),
            actual: (flow.width, flow.height),
        });
    }
    if (projected.width, projected.height) != (intrinsics.width, intrinsics.height)
        || window.x0 + window.width > projected.width
        || window.y0 + window.height > projected.height
    {
        return Err(Error::DimensionMismatch {
            expected: (intrinsics.width, intrinsics.height),
            actual: (projected.width, projected.height),
        });
    }
    if projected.points.len() != cloud.len() {
        return Err(Error::InvalidArgument(
            "projection does not match point cloud".into(),
        ));
    }

    let zbuffer = ZBuffer::build(projected);
    let mut pairs = Vec::new();
    for (x, y, i) in zbuffer.occupied() {
        if !window.contains(x, y) {
            continue;
        }
        let Some(shift) = flow.get(x - window.x0, y - window.y0) else {
            continue;
        };
        let p = &projected.points[i];
        let pixel = p.pixel + shift;
        if intrinsics.contains(&pixel) {
            pairs.push(Correspondence {
                pixel,
                point: cloud.points[p.source_index],
                source_index: p.source_index,
            });
        }
    }
    Ok(CorrespondenceSet::new(*intrinsics, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ProjectedPoint;
    use nalgebra::Vector3;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 480.0, 160.0, 960, 320).unwrap()
    }

    fn single(u: f64, v: f64) -> (PointCloud, ProjectedCloud) {
        let cloud = PointCloud::new(vec![Vector3::new(1.0, 2.0, 3.0)]);
        let projected = ProjectedCloud {
            width: 960,
            height: 320,
            points: vec![ProjectedPoint {
                pixel: Vector2::new(u, v),
                depth: 3.0,
                valid: true,
                source_index: 0,
            }],
        };
        (cloud, projected)
    }

    fn grid_cloud() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..8 {
                pts.push(Vector3::new(-4.0 + 0.4 * i as f64, -1.0 + 0.25 * j as f64, 8.0 + 0.1 * i as f64));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn identical_transforms_give_zero_flow() {
        let t = RigidTransform::identity();
        let f = ground_truth_flow(&grid_cloud(), &k(), &t, &t).unwrap();
        assert!(f.valid_count() > 0);
        assert!(f.iter_valid().all(|(_, _, v)| v == Vector2::zeros()));
    }

    #[test]
    fn flow_is_projection_difference() {
        let init = ProjectedCloud {
            width: 960,
            height: 320,
            points: vec![ProjectedPoint {
                pixel: Vector2::new(100.0, 50.0),
                depth: 4.0,
                valid: true,
                source_index: 0,
            }],
        };
        let mut gt = init.clone();
        gt.points[0].pixel = Vector2::new(103.0, 47.0);
        let f = flow_between(&init, &gt).unwrap();
        assert_eq!(f.get(100, 50), Some(Vector2::new(3.0, -3.0)));
        assert_eq!(f.valid_count(), 1);
    }

    #[test]
    fn lateral_camera_shift_gives_uniform_du_for_fronto_parallel_plane() {
        // Shifting the camera by dx on a plane at depth z moves every pixel by -fx·dx/z.
        let cloud: PointCloud = (0..50)
            .map(|i| Vector3::new(-3.0 + 0.12 * i as f64, 0.5 - 0.02 * i as f64, 10.0))
            .collect();
        let t_gt = RigidTransform::from_translation(Vector3::new(-0.2, 0.0, 0.0));
        let f = ground_truth_flow(&cloud, &k(), &RigidTransform::identity(), &t_gt).unwrap();
        assert_eq!(f.valid_count(), 50);
        for p in &cloud.points {
            let expected = 500.0 * (p.x - 0.2) / p.z - 500.0 * p.x / p.z;
            assert!((expected + 10.0).abs() < 1e-12);
        }
        for (_, _, v) in f.iter_valid() {
            assert!((v.x + 10.0).abs() < 1e-9);
            assert_eq!(v.y, 0.0);
        }
    }

    #[test]
    fn occluded_target_masks_pixel() {
        // Nearest point at the pixel leaves the frame under gt: no flow there even
        // though a farther point at the same pixel stays visible.
        let init = ProjectedCloud {
            width: 960,
            height: 320,
            points: vec![
                ProjectedPoint { pixel: Vector2::new(10.0, 10.0), depth: 2.0, valid: true, source_index: 0 },
                ProjectedPoint { pixel: Vector2::new(10.1, 10.1), depth: 5.0, valid: true, source_index: 1 },
            ],
        };
        let mut gt = init.clone();
        gt.points[0].valid = false;
        let f = flow_between(&init, &gt).unwrap();
        assert_eq!(f.valid_count(), 0);
    }

    #[test]
    fn zero_flow_keeps_coordinates() {
        let (cloud, projected) = single(100.25, 50.75);
        let mut flow = FlowField::zeros(960, 320);
        flow.set(100, 51, Vector2::zeros());
        let set = rectify(&cloud, &k(), &projected, &flow).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.pairs[0].pixel, Vector2::new(100.25, 50.75));
    }

    #[test]
    fn rectify_adds_flow() {
        let (cloud, projected) = single(100.0, 50.0);
        let mut flow = FlowField::zeros(960, 320);
        flow.set(100, 50, Vector2::new(3.0, -3.0));
        let set = rectify(&cloud, &k(), &projected, &flow).unwrap();
        assert_eq!(set.pairs[0].pixel, Vector2::new(103.0, 47.0));
        assert_eq!(set.pairs[0].point, cloud.points[0]);
    }

    #[test]
    fn rectified_out_of_bounds_is_dropped() {
        let (cloud, projected) = single(959.0, 319.0);
        let mut flow = FlowField::zeros(960, 320);
        flow.set(959, 319, Vector2::new(5.0, 5.0));
        let set = rectify(&cloud, &k(), &projected, &flow).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn unmasked_pixels_are_skipped() {
        let (cloud, projected) = single(100.0, 50.0);
        let flow = FlowField::zeros(960, 320);
        assert!(rectify(&cloud, &k(), &projected, &flow).unwrap().is_empty());
    }

    #[test]
    fn rectify_rejects_wrong_dimensions() {
        let (cloud, projected) = single(100.0, 50.0);
        let flow = FlowField::zeros(640, 320);
        assert!(matches!(
            rectify(&cloud, &k(), &projected, &flow),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn window_offsets_map_back_to_global_pixels() {
        let cloud = grid_cloud();
        let t_init = RigidTransform::identity();
        let t_gt = RigidTransform::from_euler_zyx(0.01, -0.02, 0.015)
            .with_translation(Vector3::new(0.05, 0.02, -0.1));
        let projected = project(&cloud, &k(), &t_init).unwrap();
        let full = ground_truth_flow(&cloud, &k(), &t_init, &t_gt).unwrap();
        let window = CropWindow { x0: 200, y0: 60, width: 600, height: 200 };
        let a = rectify(&cloud, &k(), &projected, &full).unwrap();
        let b = rectify_in_window(&cloud, &k(), &projected, &full.crop(&window), &window).unwrap();
        assert_eq!(a.pairs, b.pairs);
    }
}
