//! `calibflow` command-line tool.

mod commands;
mod frame;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{calibrate, evaluate, flow_gt, gen_synth, init_semantic, sequence_median};

#[derive(Debug, Parser)]
#[command(name = "calibflow", version, about = "LiDAR-camera extrinsic calibration by calibration flow")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene archive.
    GenSynth(gen_synth::Args),
    /// Write the ground-truth calibration flow of a frame as a CFL1 file.
    FlowGt(flow_gt::Args),
    /// Refine an initial extrinsic through the multi-stage flow pipeline.
    Calibrate(calibrate::Args),
    /// Coarse extrinsic from matched instance centroids.
    InitSemantic(init_semantic::Args),
    /// Compare predicted poses with ground truth.
    Evaluate(evaluate::Args),
    /// Median pose of a sequence of per-frame estimates.
    SequenceMedian(sequence_median::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::GenSynth(a) => gen_synth::run(&a),
        Command::FlowGt(a) => flow_gt::run(&a),
        Command::Calibrate(a) => calibrate::run(&a),
        Command::InitSemantic(a) => init_semantic::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::SequenceMedian(a) => sequence_median::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
