use std::path::PathBuf;

use anyhow::{bail, Result};
use calibflow::dataio::read_pose_list;
use calibflow::metrics::MetricsReport;
use calibflow::AngleConvention;
use clap::ValueEnum;
use serde::Serialize;

use crate::report::{ensure_dir, envelope, write_json, write_text, OUT_ENV};

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Paper,
    Geodesic,
}

impl From<Convention> for AngleConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Paper => AngleConvention::Paper,
            Convention::Geodesic => AngleConvention::Geodesic,
        }
    }
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Predicted poses, one per line.
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Ground-truth poses, one per line (a single line applies to every prediction).
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Initial poses; enables MSEE and MRR.
    #[arg(long, value_name = "FILE")]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Convention::Geodesic)]
    pub convention: Convention,
    /// Directory for report.json and report.txt.
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

fn broadcast<T: Copy>(v: Vec<T>, n: usize, what: &str) -> Result<Vec<T>> {
    match v.len() {
        len if len == n => Ok(v),
        1 => Ok(vec![v[0]; n]),
        len => bail!("{what} has {len} poses, expected 1 or {n}"),
    }
}

pub fn run(args: &Args) -> Result<()> {
    let pred = read_pose_list(&args.pred)?;
    if pred.is_empty() {
        bail!("no predicted poses in {}", args.pred.display());
    }
    let n = pred.len();
    let gt = broadcast(read_pose_list(&args.gt)?, n, "ground truth")?;
    let init = match &args.init {
        Some(p) => Some(broadcast(read_pose_list(p)?, n, "initial poses")?),
        None => None,
    };
    let conv = args.convention.into();
    let frames: Vec<_> = (0..n)
        .map(|i| (init.as_ref().map(|v| v[i]), pred[i], gt[i]))
        .collect();
    let report = MetricsReport::aggregate(&frames, conv)?;
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &args.out {
        let out = ensure_dir(out)?;
        let mut json = envelope("evaluate", None, args)?;
        json["frames"] = n.into();
        json["metrics"] = serde_json::to_value(&report)?;
        write_json(&out.join("report.json"), &json)?;
        write_text(&out.join("report.txt"), &table)?;
    }
    Ok(())
}
