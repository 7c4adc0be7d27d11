//! Coarse extrinsic initialization from instance centroids: the mean pixel of
//! each image instance is matched to the mean point of a LiDAR instance of the
//! same category, and the matched centroids are fed to P3P or EPnP.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::pnp::{
    p3p_candidates, ransac_pnp, reprojection_error, Correspondence, CorrespondenceSet,
    RansacConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Person,
    Rider,
    Car,
    Truck,
    Bus,
    Motorcycle,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Person,
        Category::Rider,
        Category::Car,
        Category::Truck,
        Category::Bus,
        Category::Motorcycle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Person => "person",
            Category::Rider => "rider",
            Category::Car => "car",
            Category::Truck => "truck",
            Category::Bus => "bus",
            Category::Motorcycle => "motorcycle",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown category `{s}`")))
    }
}

pub fn centroid_2d(pixels: &[Vector2<f64>]) -> Result<Vector2<f64>> {
    if pixels.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(pixels.iter().sum::<Vector2<f64>>() / pixels.len() as f64)
}

pub fn centroid_3d(points: &[Vector3<f64>]) -> Result<Vector3<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(points.iter().sum::<Vector3<f64>>() / points.len() as f64)
}

/// One segmented image instance. `pixels` may be empty when only the summary
/// (count and centroid) is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance2D {
    pub category: Category,
    pub id: u32,
    pub count: usize,
    pub centroid: Vector2<f64>,
    pub pixels: Vec<Vector2<f64>>,
}

impl Instance2D {
    pub fn from_pixels(category: Category, id: u32, pixels: Vec<Vector2<f64>>) -> Result<Self> {
        Ok(Self {
            category,
            id,
            count: pixels.len(),
            centroid: centroid_2d(&pixels)?,
            pixels,
        })
    }
}

/// One segmented LiDAR instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance3D {
    pub category: Category,
    pub id: u32,
    pub count: usize,
    pub centroid: Vector3<f64>,
    pub points: Vec<Vector3<f64>>,
}

impl Instance3D {
    pub fn from_points(category: Category, id: u32, points: Vec<Vector3<f64>>) -> Result<Self> {
        Ok(Self {
            category,
            id,
            count: points.len(),
            centroid: centroid_3d(&points)?,
            points,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceSet2D {
    pub instances: Vec<Instance2D>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceSet3D {
    pub instances: Vec<Instance3D>,
}

/// Which way LiDAR `+Y` points as seen from the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LateralAxis {
    /// Forward-left-up LiDAR frame: `+Y` is to the camera's left.
    #[default]
    LeftPositive,
    RightPositive,
}

impl LateralAxis {
    /// Sort key that increases from left to right in the image.
    fn key(&self, p: &Vector3<f64>) -> f64 {
        match self {
            LateralAxis::LeftPositive => -p.y,
            LateralAxis::RightPositive => p.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticConfig {
    pub lateral_axis: LateralAxis,
    pub ransac: RansacConfig,
    /// Rotation used to break exact ties between P3P roots; the nearest root wins.
    pub nominal_rotation: Option<Matrix3<f64>>,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            lateral_axis: LateralAxis::LeftPositive,
            ransac: RansacConfig::default(),
            nominal_rotation: Some(forward_left_up_to_camera()),
        }
    }
}

/// Camera-from-LiDAR rotation of a forward-left-up LiDAR looking along the
/// optical axis of a right-down-forward camera.
pub fn forward_left_up_to_camera() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidMatch {
    pub category: Category,
    pub id_2d: u32,
    pub id_3d: u32,
    pub pixel: Vector2<f64>,
    pub point: Vector3<f64>,
}

/// Normalized size rank in `[0, 1]`: `0` for the largest instance. Ties keep the
/// left-to-right order.
fn size_ranks(counts: &[usize]) -> Vec<f64> {
    let n = counts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        ranks[i] = if n > 1 { rank as f64 / (n - 1) as f64 } else { 0.0 };
    }
    ranks
}

const MAX_ASSIGNMENTS: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Order-preserving injection of `small` into `large` minimizing the total
/// size-rank mismatch; the lexicographically first assignment wins ties.
fn best_assignment(small: &[f64], large: &[f64]) -> Result<Vec<usize>> {
    let (k, n) = (small.len(), large.len());
    if binomial(n, k) > MAX_ASSIGNMENTS {
        return Err(Error::InvalidArgument(format!(
            "too many instances to enumerate ({k} of {n})"
        )));
    }
    let mut comb: Vec<usize> = (0..k).collect();
    let mut best = comb.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let cost: f64 = comb
            .iter()
            .enumerate()
            .map(|(i, &j)| (small[i] - large[j]).abs())
            .sum();
        if cost < best_cost - 1e-12 {
            best_cost = cost;
            best.clone_from(&comb);
        }
        // Next combination in lexicographic order.
        let Some(i) = (0..k).rev().find(|&i| comb[i] != i + n - k) else {
            break;
        };
        comb[i] += 1;
        for j in i + 1..k {
            comb[j] = comb[j - 1] + 1;
        }
    }
    Ok(best)
}

/// Pairs 2D and 3D instance centroids category by category.
///
/// Both sides are ordered left to right (image `u`, LiDAR lateral axis). With
/// equal counts the orders are zipped; otherwise the smaller side is embedded
/// into the larger one by the order-preserving assignment whose normalized
/// size ranks (pixel count vs point count) disagree least.
pub fn match_centroids(
    image: &InstanceSet2D,
    lidar: &InstanceSet3D,
    lateral: LateralAxis,
) -> Result<Vec<CentroidMatch>> {
    if image.instances.is_empty() || lidar.instances.is_empty() {
        return Err(Error::NoMatches);
    }
    let mut matches = Vec::new();
    for category in Category::ALL {
        let mut a: Vec<&Instance2D> = image
            .instances
            .iter()
            .filter(|i| i.category == category)
            .collect();
        let mut b: Vec<&Instance3D> = lidar
            .instances
            .iter()
            .filter(|i| i.category == category)
            .collect();
        if a.is_empty() || b.is_empty() {
            continue;
        }
        a.sort_by(|x, y| x.centroid.x.total_cmp(&y.centroid.x).then(x.id.cmp(&y.id)));
        b.sort_by(|x, y| {
            lateral
                .key(&x.centroid)
                .total_cmp(&lateral.key(&y.centroid))
                .then(x.id.cmp(&y.id))
        });
        let ra = size_ranks(&a.iter().map(|i| i.count).collect::<Vec<_>>());
        let rb = size_ranks(&b.iter().map(|i| i.count).collect::<Vec<_>>());
        let pairs: Vec<(usize, usize)> = if a.len() == b.len() {
            (0..a.len()).map(|i| (i, i)).collect()
        } else if a.len() < b.len() {
            best_assignment(&ra, &rb)?.into_iter().enumerate().collect()
        } else {
            best_assignment(&rb, &ra)?
                .into_iter()
                .enumerate()
                .map(|(j, i)| (i, j))
                .collect()
        };
        matches.extend(pairs.into_iter().map(|(i, j)| CentroidMatch {
            category,
            id_2d: a[i].id,
            id_3d: b[j].id,
            pixel: a[i].centroid,
            point: b[j].centroid,
        }));
    }
    if matches.is_empty() {
        return Err(Error::NoMatches);
    }
    Ok(matches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    P3p,
    P3pHoldout,
    EpnpRansac,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticInit {
    pub pose: RigidTransform,
    pub method: InitMethod,
    pub matches: Vec<CentroidMatch>,
    /// Positions in `matches` used by the final estimate.
    pub inliers: Vec<usize>,
}

fn rotation_distance(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let cos = (((a.transpose() * b).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    cos.acos()
}

/// Coarse camera-from-LiDAR extrinsic from matched instance centroids.
///
/// Three matches use P3P (ties between exact roots resolved by the nominal
/// rotation), four matches run P3P on every triple scored on the held-out
/// match, and five or more use EPnP inside RANSAC.
pub fn semantic_initialize(
    image: &InstanceSet2D,
    lidar: &InstanceSet3D,
    intrinsics: &CameraIntrinsics,
    cfg: &SemanticConfig,
) -> Result<SemanticInit> {
    let matches = match match_centroids(image, lidar, cfg.lateral_axis) {
        Ok(m) => m,
        Err(Error::NoMatches) => return Err(Error::InsufficientInstances(0)),
        Err(e) => return Err(e),
    };
    let n = matches.len();
    if n < 3 {
        return Err(Error::InsufficientInstances(n));
    }
    let pairs: Vec<Correspondence> = matches
        .iter()
        .enumerate()
        .map(|(i, m)| Correspondence {
            pixel: m.pixel,
            point: m.point,
            source_index: i,
        })
        .collect();

    let (pose, method, inliers) = match n {
        3 => {
            let triple = [pairs[0], pairs[1], pairs[2]];
            let set = CorrespondenceSet::new(*intrinsics, pairs.clone());
            let scored: Vec<(f64, RigidTransform)> = p3p_candidates(intrinsics, &triple)?
                .into_iter()
                .map(|p| (set.rms_error(&p), p))
                .collect();
            let best_rms = scored
                .iter()
                .map(|(e, _)| *e)
                .fold(f64::INFINITY, f64::min);
            let near: Vec<&(f64, RigidTransform)> =
                scored.iter().filter(|(e, _)| *e <= best_rms + 1e-6).collect();
            let chosen = match cfg.nominal_rotation {
                Some(nominal) => near.into_iter().min_by(|a, b| {
                    rotation_distance(a.1.rotation(), &nominal)
                        .total_cmp(&rotation_distance(b.1.rotation(), &nominal))
                }),
                None => near.into_iter().next(),
            };
            let pose = chosen.ok_or(Error::Degenerate)?.1;
            (pose, InitMethod::P3p, vec![0, 1, 2])
        }
        4 => {
            let mut best: Option<(f64, RigidTransform, usize)> = None;
            for held_out in 0..4 {
                let idx: Vec<usize> = (0..4).filter(|&i| i != held_out).collect();
                let triple = [pairs[idx[0]], pairs[idx[1]], pairs[idx[2]]];
                let Ok(candidates) = p3p_candidates(intrinsics, &triple) else {
                    continue;
                };
                for pose in candidates {
                    let e = reprojection_error(intrinsics, &pose, &pairs[held_out]);
                    if best.as_ref().map_or(true, |(be, _, _)| e < *be) {
                        best = Some((e, pose, held_out));
                    }
                }
            }
            let (_, pose, held_out) = best.ok_or(Error::Degenerate)?;
            let inliers = (0..4).filter(|&i| i != held_out).collect();
            (pose, InitMethod::P3pHoldout, inliers)
        }
        _ => {
            let set = CorrespondenceSet::new(*intrinsics, pairs);
            let r = ransac_pnp(&set, &cfg.ransac)?;
            (r.pose, InitMethod::EpnpRansac, r.inliers)
        }
    };
    Ok(SemanticInit {
        pose,
        method,
        matches,
        inliers,
    })
}

// Text format: one instance per line,
//   `category id count c_1 .. c_d [m_1 .. m_{count·d}]`
// with `d = 2` for image instances and `d = 3` for LiDAR instances. `#` starts a
// comment.

struct Record {
    category: Category,
    id: u32,
    count: usize,
    centroid: Vec<f64>,
    members: Vec<f64>,
}

fn parse_records(text: &str, dim: usize) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("line {}", lineno + 1);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 3 + dim {
            return Err(Error::parse(loc(), format!("expected at least {} fields", 3 + dim)));
        }
        let category: Category = tokens[0]
            .parse()
            .map_err(|e: Error| Error::parse(loc(), e.to_string()))?;
        let id: u32 = tokens[1]
            .parse()
            .map_err(|_| Error::parse(loc(), format!("bad id `{}`", tokens[1])))?;
        let count: usize = tokens[2]
            .parse()
            .map_err(|_| Error::parse(loc(), format!("bad count `{}`", tokens[2])))?;
        if count == 0 {
            return Err(Error::parse(loc(), "instance with zero members"));
        }
        let numbers = tokens[3..]
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(loc(), format!("non-numeric token `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (centroid, members) = numbers.split_at(dim);
        if !members.is_empty() && members.len() != count * dim {
            return Err(Error::parse(
                loc(),
                format!("{} member values for count {count}", members.len()),
            ));
        }
        out.push(Record {
            category,
            id,
            count,
            centroid: centroid.to_vec(),
            members: members.to_vec(),
        });
    }
    Ok(out)
}

fn check_centroid(given: &[f64], computed: &[f64], id: u32) -> Result<()> {
    for (g, c) in given.iter().zip(computed) {
        if (g - c).abs() > 1e-6 * (1.0 + c.abs()) {
            return Err(Error::parse(
                format!("instance {id}"),
                "centroid disagrees with members",
            ));
        }
    }
    Ok(())
}

impl InstanceSet2D {
    pub fn parse(text: &str) -> Result<Self> {
        let instances = parse_records(text, 2)?
            .into_iter()
            .map(|r| {
                let pixels: Vec<Vector2<f64>> = r
                    .members
                    .chunks_exact(2)
                    .map(|c| Vector2::new(c[0], c[1]))
                    .collect();
                if !pixels.is_empty() {
                    let c = centroid_2d(&pixels)?;
                    check_centroid(&r.centroid, c.as_slice(), r.id)?;
                }
                Ok(Instance2D {
                    category: r.category,
                    id: r.id,
                    count: r.count,
                    centroid: Vector2::new(r.centroid[0], r.centroid[1]),
                    pixels,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { instances })
    }

    pub fn to_text(&self, with_members: bool) -> String {
        let mut s = String::from("# category id count u v [u_i v_i ...]\n");
        for i in &self.instances {
            let _ = write!(s, "{} {} {} {} {}", i.category, i.id, i.count, i.centroid.x, i.centroid.y);
            if with_members {
                for p in &i.pixels {
                    let _ = write!(s, " {} {}", p.x, p.y);
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>, with_members: bool) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text(with_members)).map_err(|e| Error::io(path, e))
    }
}

impl InstanceSet3D {
    pub fn parse(text: &str) -> Result<Self> {
        let instances = parse_records(text, 3)?
            .into_iter()
            .map(|r| {
                let points: Vec<Vector3<f64>> = r
                    .members
                    .chunks_exact(3)
                    .map(|c| Vector3::new(c[0], c[1], c[2]))
                    .collect();
                if !points.is_empty() {
                    let c = centroid_3d(&points)?;
                    check_centroid(&r.centroid, c.as_slice(), r.id)?;
                }
                Ok(Instance3D {
                    category: r.category,
                    id: r.id,
                    count: r.count,
                    centroid: Vector3::new(r.centroid[0], r.centroid[1], r.centroid[2]),
                    points,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { instances })
    }

    pub fn to_text(&self, with_members: bool) -> String {
        let mut s = String::from("# category id count x y z [x_i y_i z_i ...]\n");
        for i in &self.instances {
            let c = &i.centroid;
            let _ = write!(s, "{} {} {} {} {} {}", i.category, i.id, i.count, c.x, c.y, c.z);
            if with_members {
                for p in &i.points {
                    let _ = write!(s, " {} {} {}", p.x, p.y, p.z);
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>, with_members: bool) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text(with_members)).map_err(|e| Error::io(path, e))
    }
}
