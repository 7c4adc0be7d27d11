use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use calibflow::dataio::{load_calib, read_pose, write_pose};
use calibflow::metrics::{rotation_error, translation_error};
use calibflow::semantic::{semantic_initialize, InitMethod, LateralAxis, SemanticConfig};
use calibflow::{AngleConvention, InstanceSet2D, InstanceSet3D, RansacConfig};
use serde::Serialize;

use crate::report::{ensure_dir, envelope, pose_json, write_json, OUT_ENV};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Scene archive; supplies defaults for every file below.
    #[arg(long, value_name = "DIR")]
    pub scene: Option<PathBuf>,
    /// Image instances (text format).
    #[arg(long, value_name = "FILE")]
    pub instances2d: Option<PathBuf>,
    /// LiDAR instances (text format).
    #[arg(long, value_name = "FILE")]
    pub instances3d: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub calib: Option<PathBuf>,
    /// Ground-truth pose for reporting errors.
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
    /// LiDAR +Y points to the camera's right instead of its left.
    #[arg(long)]
    pub lateral_right: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
}

fn pick(explicit: &Option<PathBuf>, scene: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match (explicit, scene) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(name)),
        (None, None) => bail!("missing --{}", name.trim_end_matches(".txt").replace('_', "-")),
    }
}

pub fn run(args: &Args) -> Result<()> {
    let image = InstanceSet2D::read(pick(&args.instances2d, &args.scene, "instances2d.txt")?)
        .context("reading image instances")?;
    let lidar = InstanceSet3D::read(pick(&args.instances3d, &args.scene, "instances3d.txt")?)
        .context("reading LiDAR instances")?;
    let calib = load_calib(pick(&args.calib, &args.scene, "calib.txt")?)?;
    let gt_path = args
        .gt
        .clone()
        .or_else(|| args.scene.as_ref().map(|d| d.join("gt_pose.txt")))
        .filter(|p| p.exists());

    let cfg = SemanticConfig {
        lateral_axis: if args.lateral_right {
            LateralAxis::RightPositive
        } else {
            LateralAxis::LeftPositive
        },
        ransac: RansacConfig {
            seed: args.seed,
            ..RansacConfig::default()
        },
        ..SemanticConfig::default()
    };
    let init = semantic_initialize(&image, &lidar, &calib.intrinsics, &cfg)?;

    let out = ensure_dir(&args.out)?;
    let pose_path = out.join("init_pose.txt");
    write_pose(&pose_path, &init.pose)?;
    let mut json = envelope("init-semantic", Some(args.seed), args)?;
    json["pose"] = pose_json(&init.pose);
    json["method"] = match init.method {
        InitMethod::P3p => "p3p",
        InitMethod::P3pHoldout => "p3p-holdout",
        InitMethod::EpnpRansac => "epnp-ransac",
    }
    .into();
    json["matches"] = init
        .matches
        .iter()
        .map(|m| serde_json::json!({"category": m.category.as_str(), "id_2d": m.id_2d, "id_3d": m.id_3d}))
        .collect();
    json["inliers"] = serde_json::to_value(&init.inliers)?;
    println!("{} matches, wrote {}", init.matches.len(), pose_path.display());
    if let Some(p) = gt_path {
        let gt = read_pose(&p)?;
        let e_t = translation_error(&init.pose, &gt).e_t;
        let e_r = rotation_error(&init.pose, &gt, AngleConvention::Geodesic);
        json["E_t"] = e_t.into();
        json["E_R"] = e_r.into();
        println!("E_t {:.6} cm, E_R {:.6} deg", e_t * 100.0, e_r);
    }
    write_json(&out.join("init.json"), &json)?;
    Ok(())
}
