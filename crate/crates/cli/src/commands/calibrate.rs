use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use calibflow::dataio::write_pose;
use calibflow::metrics::{rotation_error, translation_error, MetricsReport};
use calibflow::refine::{
    refine_full, sequence_median, FilePredictor, FlowPredictor, OraclePredictor,
    OraclePredictorConfig, RefinementReport, StageStatus, DEFAULT_OUTLIER_THRESHOLD,
};
use calibflow::{AngleConvention, RansacConfig, RefinementConfig, RigidTransform};
use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::evaluate::Convention;
use crate::frame::{Frame, FrameArgs, InitArgs};
use crate::report::{ensure_dir, envelope, pose_json, write_json, write_text, OUT_ENV};

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    /// Ground-truth flow.
    Exact,
    /// Ground-truth flow with Gaussian noise and outliers.
    Noisy,
    /// Precomputed CFL1 files `stage<k>_<frame-id>.cfl`.
    File,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[command(flatten)]
    pub frame: FrameArgs,
    #[command(flatten)]
    pub init: InitArgs,
    #[arg(long, value_enum, default_value_t = Predictor::Exact)]
    pub predictor: Predictor,
    /// Pixel noise of the noisy oracle.
    #[arg(long, default_value_t = 0.5)]
    pub noise_sigma: f64,
    /// Share of flow pixels the noisy oracle replaces by outliers.
    #[arg(long, default_value_t = 0.1)]
    pub outlier_fraction: f64,
    #[arg(long, default_value_t = 50.0)]
    pub outlier_radius: f64,
    /// Directory of flow files for the file predictor.
    #[arg(long, value_name = "DIR", required_if_eq("predictor", "file"))]
    pub flow_dir: Option<PathBuf>,
    /// Number of refinement stages (1 to 5, coarse to fine).
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=5))]
    pub stages: u64,
    #[arg(long, default_value_t = 10)]
    pub n_valid: usize,
    #[arg(long, default_value_t = 0)]
    pub ransac_seed: u64,
    #[arg(long, value_enum, default_value_t = Convention::Geodesic)]
    pub convention: Convention,
    /// Outlier threshold for the sequence median (se(3) distance).
    #[arg(long, default_value_t = DEFAULT_OUTLIER_THRESHOLD)]
    pub median_threshold: f64,
    /// Worker threads for independent frames.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
}

struct FrameResult {
    id: String,
    t_init: RigidTransform,
    t_gt: Option<RigidTransform>,
    report: RefinementReport,
}

fn refinement_config(args: &Args) -> Result<RefinementConfig> {
    let mut cfg = RefinementConfig {
        n_valid: args.n_valid,
        ransac: RansacConfig {
            seed: args.ransac_seed,
            ..RansacConfig::default()
        },
        ..RefinementConfig::default()
    };
    cfg.stages.truncate(args.stages as usize);
    cfg.validate()?;
    Ok(cfg)
}

fn calibrate_frame(args: &Args, cfg: &RefinementConfig, index: usize, f: &Frame) -> Result<FrameResult> {
    let t_init = args.init.initial(f.t_gt.as_ref(), index)?;
    let predictor: Box<dyn FlowPredictor> = match args.predictor {
        Predictor::File => Box::new(FilePredictor::new(args.flow_dir.clone().expect("required by clap"))),
        Predictor::Exact | Predictor::Noisy => {
            let Some(t_gt) = f.t_gt else {
                bail!("frame {}: the oracle predictor needs ground truth", f.id);
            };
            let mut oc = OraclePredictorConfig::exact(t_gt);
            if args.predictor == Predictor::Noisy {
                oc.noise_sigma_px = args.noise_sigma;
                oc.outlier_fraction = args.outlier_fraction;
                oc.outlier_radius_px = args.outlier_radius;
                oc.seed = args.init.seed.wrapping_add(index as u64);
            }
            Box::new(OraclePredictor::new(oc)?)
        }
    };
    let predictors = vec![predictor.as_ref(); cfg.stages.len()];
    let report = refine_full(&f.cloud, &f.intrinsics, &t_init, &predictors, &f.id, cfg)
        .with_context(|| format!("frame {}", f.id))?;
    Ok(FrameResult {
        id: f.id.clone(),
        t_init,
        t_gt: f.t_gt,
        report,
    })
}

fn stages_csv(r: &FrameResult, conv: AngleConvention) -> String {
    let mut s = String::from("stage,status,n_rect,n_inliers,E_t_m,E_R_deg\n");
    for (k, st) in r.report.stages.iter().enumerate() {
        let (e_t, e_r) = match &r.t_gt {
            Some(gt) => (
                translation_error(&st.pose, gt).e_t.to_string(),
                rotation_error(&st.pose, gt, conv).to_string(),
            ),
            None => (String::new(), String::new()),
        };
        let status = match st.status {
            StageStatus::Refined => "refined",
            StageStatus::Insufficient => "insufficient",
        };
        let _ = writeln!(s, "{},{status},{},{},{e_t},{e_r}", k + 1, st.n_rect, st.n_inliers);
    }
    s
}

pub fn run(args: &Args) -> Result<()> {
    let cfg = refinement_config(args)?;
    let frames = args.frame.load()?;
    let conv: AngleConvention = args.convention.into();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()?;
    let results: Vec<FrameResult> = pool.install(|| {
        frames
            .par_iter()
            .enumerate()
            .map(|(i, f)| calibrate_frame(args, &cfg, i, f))
            .collect::<Result<_>>()
    })?;

    let out = ensure_dir(&args.out)?;
    let mut frame_json = Vec::new();
    let mut with_gt = Vec::new();
    let mut text = String::new();
    for r in &results {
        let dir = ensure_dir(&out.join(&r.id))?;
        write_pose(dir.join("pose.txt"), &r.report.pose)?;
        for (k, st) in r.report.stages.iter().enumerate() {
            write_pose(dir.join(format!("stage{}_pose.txt", k + 1)), &st.pose)?;
        }
        write_text(&dir.join("stages.csv"), &stages_csv(r, conv))?;
        let metrics = r
            .t_gt
            .map(|gt| MetricsReport::evaluate(&r.report.pose, &gt, Some(&r.t_init), conv));
        if let Some(gt) = r.t_gt {
            with_gt.push((Some(r.t_init), r.report.pose, gt));
        }
        let _ = writeln!(text, "frame {}: {} of {} stages refined", r.id, r.report.completed, cfg.stages.len());
        match &metrics {
            Some(m) => text.push_str(&m.to_table()),
            None => text.push_str("metrics unavailable (no ground truth)\n"),
        }
        let stages: Vec<Value> = r
            .report
            .stages
            .iter()
            .map(|st| {
                json!({
                    "status": format!("{:?}", st.status).to_lowercase(),
                    "n_rect": st.n_rect,
                    "n_inliers": st.n_inliers,
                    "window": [st.window.x0, st.window.y0, st.window.width, st.window.height],
                    "pose": pose_json(&st.pose),
                })
            })
            .collect();
        frame_json.push(json!({
            "frame": r.id,
            "t_init": pose_json(&r.t_init),
            "pose": pose_json(&r.report.pose),
            "completed_stages": r.report.completed,
            "stages": stages,
            "metrics_available": metrics.is_some(),
            "metrics": metrics,
        }));
    }

    let mut report = envelope("calibrate", Some(args.init.seed), args)?;
    report["frames"] = Value::Array(frame_json);
    report["aggregate"] = if results.len() > 1 && !with_gt.is_empty() {
        serde_json::to_value(MetricsReport::aggregate(&with_gt, conv)?)?
    } else {
        Value::Null
    };
    if results.len() > 1 {
        let poses: Vec<_> = results.iter().map(|r| r.report.pose).collect();
        let m = sequence_median(&poses, args.median_threshold)?;
        write_pose(out.join("median_pose.txt"), &m.pose)?;
        report["sequence_median"] = json!({
            "pose": pose_json(&m.pose),
            "outliers": m.outliers.iter().map(|&i| results[i].id.clone()).collect::<Vec<_>>(),
        });
        let _ = writeln!(text, "sequence median written; {} outlier frame(s)", m.outliers.len());
    }
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
