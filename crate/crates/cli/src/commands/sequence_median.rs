use std::path::PathBuf;

use anyhow::{bail, Result};
use calibflow::dataio::{format_pose, read_pose_list, write_pose};
use calibflow::refine::{sequence_median, DEFAULT_OUTLIER_THRESHOLD};
use serde::Serialize;

use crate::report::{ensure_dir, envelope, pose_json, write_json, OUT_ENV};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Pose files; each may hold several poses, one per line.
    #[arg(required = true, value_name = "FILE")]
    pub poses: Vec<PathBuf>,
    /// se(3) distance above which a frame is reported as an outlier.
    #[arg(long, default_value_t = DEFAULT_OUTLIER_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &Args) -> Result<()> {
    let mut poses = Vec::new();
    for p in &args.poses {
        poses.extend(read_pose_list(p)?);
    }
    if poses.is_empty() {
        bail!("no poses given");
    }
    let m = sequence_median(&poses, args.threshold)?;
    println!("{}", format_pose(&m.pose));
    if !m.outliers.is_empty() {
        eprintln!("outliers: {:?}", m.outliers);
    }
    if let Some(out) = &args.out {
        let out = ensure_dir(out)?;
        write_pose(out.join("median_pose.txt"), &m.pose)?;
        let mut json = envelope("sequence-median", None, args)?;
        json["pose"] = pose_json(&m.pose);
        json["distances"] = serde_json::to_value(&m.distances)?;
        json["outliers"] = serde_json::to_value(&m.outliers)?;
        write_json(&out.join("median.json"), &json)?;
    }
    Ok(())
}
