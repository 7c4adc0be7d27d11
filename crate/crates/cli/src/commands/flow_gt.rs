use std::path::PathBuf;

use anyhow::{bail, Result};
use calibflow::flow::{ground_truth_flow, write_cfl};
use calibflow::geometry::project;
use calibflow::refine::adaptive_crop;
use serde::Serialize;

use crate::frame::{FrameArgs, InitArgs};
use crate::report::{ensure_dir, envelope, write_json, OUT_ENV};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[command(flatten)]
    pub frame: FrameArgs,
    #[command(flatten)]
    pub init: InitArgs,
    /// Crop the flow to the adaptive window of this size (WIDTHxHEIGHT).
    #[arg(long, value_name = "WxH", value_parser = parse_dims)]
    pub crop: Option<(usize, usize)>,
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
}

pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let parse = |v: &str| v.parse::<usize>().map_err(|e| e.to_string());
    Ok((parse(w)?, parse(h)?))
}

pub fn run(args: &Args) -> Result<()> {
    let frames = args.frame.load()?;
    if frames.len() != 1 {
        bail!("flow-gt takes exactly one frame");
    }
    let f = &frames[0];
    let Some(t_gt) = f.t_gt else {
        bail!("flow-gt needs a ground-truth pose");
    };
    let t_init = args.init.initial(Some(&t_gt), 0)?;
    let mut flow = ground_truth_flow(&f.cloud, &f.intrinsics, &t_init, &t_gt)?;
    let mut window = None;
    if let Some(dims) = args.crop {
        let projected = project(&f.cloud, &f.intrinsics, &t_init)?;
        let w = adaptive_crop(&projected, (f.intrinsics.width, f.intrinsics.height), dims)?;
        flow = flow.crop(&w);
        window = Some([w.x0, w.y0, w.width, w.height]);
    }
    let out = ensure_dir(&args.out)?;
    let path = out.join(format!("flow_{}.cfl", f.id));
    write_cfl(&path, &flow)?;
    let mut meta = envelope("flow-gt", Some(args.init.seed), args)?;
    meta["frame"] = f.id.clone().into();
    meta["valid_pixels"] = flow.valid_count().into();
    meta["window"] = serde_json::to_value(window)?;
    meta["t_init"] = crate::report::pose_json(&t_init);
    write_json(&out.join(format!("flow_{}.json", f.id)), &meta)?;
    println!("wrote {} ({}x{}, {} valid pixels)", path.display(), flow.width, flow.height, flow.valid_count());
    Ok(())
}
