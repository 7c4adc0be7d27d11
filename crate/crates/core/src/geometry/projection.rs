use nalgebra::{Vector2, Vector3};

use super::{CameraIntrinsics, RigidTransform};
use crate::error::{Error, Result};

/// LiDAR points in the sensor frame, with optional per-point channels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Instance label per point; `0` marks background.
    pub labels: Option<Vec<u32>>,
    pub reflectance: Option<Vec<f32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            labels: None,
            reflectance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl FromIterator<Vector3<f64>> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Vector3<f64>>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    /// Continuous pixel coordinates `(u, v)`.
    pub pixel: Vector2<f64>,
    /// Camera-frame `Z`.
    pub depth: f64,
    pub valid: bool,
    pub source_index: usize,
}

/// Result of projecting a [`PointCloud`] into an image of known size.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedCloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<ProjectedPoint>,
}

impl ProjectedCloud {
    pub fn valid(&self) -> impl Iterator<Item = &ProjectedPoint> {
        self.points.iter().filter(|p| p.valid)
    }

    pub fn valid_count(&self) -> usize {
        self.valid().count()
    }

    /// Integer pixel bin of a valid point.
    pub fn bin(&self, point: &ProjectedPoint) -> (usize, usize) {
        (
            pixel_bin(point.pixel.x, self.width),
            pixel_bin(point.pixel.y, self.height),
        )
    }

    /// Mean pixel coordinate of the valid points, if any.
    pub fn valid_centroid(&self) -> Option<Vector2<f64>> {
        let (sum, n) = self
            .valid()
            .fold((Vector2::zeros(), 0usize), |(s, n), p| (s + p.pixel, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Round-half-down to an integer bin, clamped to `[0, size − 1]`.
#[inline]
pub fn pixel_bin(coord: f64, size: usize) -> usize {
    let b = (coord - 0.5).ceil().max(0.0) as usize;
    b.min(size.saturating_sub(1))
}

/// Projects every point through `K [R | t]`.
///
/// A point is valid when its camera-frame depth is positive and its continuous
/// pixel lies in `[0, W) × [0, H)`.
pub fn project(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    extrinsic: &RigidTransform,
) -> Result<ProjectedCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    let points = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let pc = extrinsic.transform_point(p);
            if pc.z > 0.0 {
                let pixel = intrinsics.project(&pc);
                ProjectedPoint {
                    pixel,
                    depth: pc.z,
                    valid: intrinsics.contains(&pixel),
                    source_index: i,
                }
            } else {
                ProjectedPoint {
                    pixel: Vector2::new(f64::NAN, f64::NAN),
                    depth: pc.z,
                    valid: false,
                    source_index: i,
                }
            }
        })
        .collect();
    Ok(ProjectedCloud {
        width: intrinsics.width,
        height: intrinsics.height,
        points,
    })
}

/// Per-pixel nearest point of a projection: minimum depth, ties broken by the
/// lower source index.
#[derive(Debug, Clone)]
pub struct ZBuffer {
    pub width: usize,
    pub height: usize,
    /// Index into `ProjectedCloud::points` of the winning point, row-major.
    winners: Vec<Option<usize>>,
}

impl ZBuffer {
    pub fn build(projected: &ProjectedCloud) -> Self {
        let mut winners: Vec<Option<usize>> = vec![None; projected.width * projected.height];
        for (i, p) in projected.points.iter().enumerate() {
            if !p.valid {
                continue;
            }
            let (x, y) = projected.bin(p);
            let slot = &mut winners[y * projected.width + x];
            let replace = match *slot {
                None => true,
                Some(j) => {
                    let q = &projected.points[j];
                    p.depth < q.depth || (p.depth == q.depth && p.source_index < q.source_index)
                }
            };
            if replace {
                *slot = Some(i);
            }
        }
        Self {
            width: projected.width,
            height: projected.height,
            winners,
        }
    }

    #[inline]
    pub fn winner(&self, x: usize, y: usize) -> Option<usize> {
        self.winners[y * self.width + x]
    }

    /// `(x, y, index)` for every occupied pixel in row-major order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.winners
            .iter()
            .enumerate()
            .filter_map(move |(k, w)| w.map(|i| (k % self.width, k / self.width, i)))
    }
}

/// Axis-aligned pixel window `[x0, x0 + width) × [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl CropWindow {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            width,
            height,
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.width && y >= self.y0 && y < self.y0 + self.height
    }
}

/// Sparse depth image; `0` means no point.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn crop(&self, window: &CropWindow) -> DepthImage {
        let mut out = DepthImage::zeros(window.width, window.height);
        for y in 0..window.height {
            let src = (window.y0 + y) * self.width + window.x0;
            out.data[y * window.width..(y + 1) * window.width]
                .copy_from_slice(&self.data[src..src + window.width]);
        }
        out
    }
}

/// Z-buffered sparse depth image of the valid projected points.
pub fn render_depth(projected: &ProjectedCloud) -> DepthImage {
    let zbuffer = ZBuffer::build(projected);
    let mut image = DepthImage::zeros(projected.width, projected.height);
    for (x, y, i) in zbuffer.occupied() {
        image.data[y * projected.width + x] = projected.points[i].depth;
    }
    image
}
