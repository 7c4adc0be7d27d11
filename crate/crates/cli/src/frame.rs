use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use calibflow::dataio::{load_calib, load_velodyne_bin, read_pose, sample_perturbation, PerturbationRange};
use calibflow::{CameraIntrinsics, PointCloud, RigidTransform};
use clap::Args;
use serde::Serialize;

/// One calibration frame: a scene archive directory or a KITTI scan with its
/// calibration file.
#[derive(Debug, Clone, Args, Serialize)]
pub struct FrameArgs {
    /// Scene archive directory (repeat for a sequence).
    #[arg(long = "scene", value_name = "DIR")]
    pub scenes: Vec<PathBuf>,
    /// KITTI velodyne scan; requires --calib.
    #[arg(long, value_name = "FILE", requires = "calib", conflicts_with = "scenes")]
    pub velodyne: Option<PathBuf>,
    /// KITTI calibration text (P2, Tr); its Tr is the ground truth unless --gt is given.
    #[arg(long, value_name = "FILE", requires = "velodyne")]
    pub calib: Option<PathBuf>,
    /// Ground-truth pose file overriding the frame's own.
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
}

pub struct Frame {
    pub id: String,
    pub cloud: PointCloud,
    pub intrinsics: CameraIntrinsics,
    pub t_gt: Option<RigidTransform>,
}

fn frame_id(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty() && s != ".")
        .unwrap_or_else(|| "frame".into())
}

fn load_scene_dir(dir: &Path, gt: Option<&Path>) -> Result<Frame> {
    let cloud = load_velodyne_bin(dir.join("cloud.bin"))
        .with_context(|| format!("loading scene {}", dir.display()))?;
    let calib = load_calib(dir.join("calib.txt"))?;
    let gt_path = gt.map(Path::to_path_buf).unwrap_or_else(|| dir.join("gt_pose.txt"));
    let t_gt = if gt_path.exists() {
        Some(read_pose(&gt_path)?)
    } else {
        log::warn!("{}: no ground truth, metrics unavailable", dir.display());
        None
    };
    let canonical = dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf());
    Ok(Frame {
        id: frame_id(&canonical),
        cloud,
        intrinsics: calib.intrinsics,
        t_gt,
    })
}

impl FrameArgs {
    pub fn load(&self) -> Result<Vec<Frame>> {
        if let (Some(velodyne), Some(calib)) = (&self.velodyne, &self.calib) {
            let cloud = load_velodyne_bin(velodyne)?;
            let calib = load_calib(calib)?;
            let t_gt = match &self.gt {
                Some(p) => read_pose(p)?,
                None => calib.extrinsic,
            };
            return Ok(vec![Frame {
                id: frame_id(velodyne),
                cloud,
                intrinsics: calib.intrinsics,
                t_gt: Some(t_gt),
            }]);
        }
        if self.scenes.is_empty() {
            bail!("no input: pass --scene DIR or --velodyne FILE --calib FILE");
        }
        if self.gt.is_some() && self.scenes.len() > 1 {
            bail!("--gt applies to a single frame");
        }
        self.scenes
            .iter()
            .map(|d| load_scene_dir(d, self.gt.as_deref()))
            .collect()
    }
}

/// Initial extrinsic: an explicit pose file, or `ΔT · T_gt` with a sampled `ΔT`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct InitArgs {
    /// Initial pose file (12 row-major values); overrides the perturbation.
    #[arg(long, value_name = "FILE")]
    pub t_init: Option<PathBuf>,
    /// Perturbation bound per translation axis (m).
    #[arg(long, default_value_t = 1.5)]
    pub perturb_trans: f64,
    /// Perturbation bound per Euler angle (degrees).
    #[arg(long, default_value_t = 20.0)]
    pub perturb_rot: f64,
    /// Seed of the perturbation; frame `i` of a sequence uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl InitArgs {
    pub fn initial(&self, t_gt: Option<&RigidTransform>, index: usize) -> Result<RigidTransform> {
        if let Some(path) = &self.t_init {
            return Ok(read_pose(path)?);
        }
        let Some(gt) = t_gt else {
            bail!("no ground truth to perturb; pass --t-init");
        };
        let range = PerturbationRange::new(self.perturb_trans, self.perturb_rot);
        Ok(sample_perturbation(&range, self.seed.wrapping_add(index as u64))?.compose(gt))
    }
}
