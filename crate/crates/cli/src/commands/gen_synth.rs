use std::path::PathBuf;

use anyhow::Result;
use calibflow::dataio::{generate_scene, write_scene, SceneSpec};
use calibflow::geometry::project;
use serde::Serialize;

use crate::report::{envelope, write_json, OUT_ENV};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    pub points: u64,
    #[arg(long, default_value_t = 6)]
    pub instances: usize,
    /// Upper bound on points per instance.
    #[arg(long, default_value_t = 120)]
    pub instance_points: usize,
    #[arg(long, default_value_t = 4.0)]
    pub depth_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub depth_max: f64,
    #[arg(long, default_value_t = 30.0)]
    pub lateral_extent: f64,
    /// Share of points placed behind the camera (at most 0.1).
    #[arg(long, default_value_t = 0.05)]
    pub outside_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Archive directory.
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
}

pub fn run(args: &Args) -> Result<()> {
    let spec = SceneSpec {
        points: args.points as usize,
        depth_range: (args.depth_min, args.depth_max),
        lateral_extent: args.lateral_extent,
        instances: args.instances,
        instance_points: args.instance_points,
        outside_fraction: args.outside_fraction,
        seed: args.seed,
    };
    let scene = generate_scene(&spec)?;
    write_scene(&args.out, &scene)?;
    let visible = project(&scene.cloud, &scene.intrinsics, &scene.t_gt)?.valid_count();
    let mut meta = envelope("gen-synth", Some(args.seed), args)?;
    meta["points"] = scene.cloud.len().into();
    meta["visible"] = visible.into();
    meta["instances"] = scene.instances.instances.len().into();
    write_json(&args.out.join("scene.json"), &meta)?;
    println!(
        "wrote {}: {} points ({} visible), {} instances",
        args.out.display(),
        scene.cloud.len(),
        visible,
        scene.instances.instances.len()
    );
    Ok(())
}
