//! `accid`: validate annotations, detect incidents, compute statistics,
//! score detections, simulate scenes and time the pipeline.
//!
//! Exit codes: 0 success, 1 invalid input or failed validation, 2 usage.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "accid", version, about = "Rule-based accident detection on 3D-tracked highway traffic")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// JSON config file with optional sections rules, lanes, pipeline,
    /// validation, stats and threads.
    #[arg(long, global = true, env = "ACCID_CONFIG")]
    pub config: Option<PathBuf>,
    /// Rule config file, or `default`.
    #[arg(long, global = true)]
    pub rules: Option<String>,
    /// Lane map file, or `default`.
    #[arg(long, global = true)]
    pub lanes: Option<String>,
    /// Upper bound on worker threads.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
    /// More diagnostics on standard error; repeatable.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only errors on standard error.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check annotation files.
    Validate(ValidateArgs),
    /// Run the detection pipeline and write events.
    Detect(DetectArgs),
    /// Dataset statistics as JSON and CSV.
    Stats(StatsArgs),
    /// Compare detected events with ground truth.
    Score(ScoreArgs),
    /// Generate a synthetic annotated scene with ground truth.
    Simulate(SimulateArgs),
    /// Time the pipeline on files or a synthetic sequence.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Annotation file; repeatable.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Report destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorChoice {
    /// Rule-based analysis only.
    None,
    /// Synthetic detector driven by a ground-truth file.
    Stub,
    /// Recorded detections from a JSON file.
    Replay,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Annotation file; repeatable. Files are joined by frame index.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Event destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DetectorChoice::None)]
    pub detector: DetectorChoice,
    /// Ground truth for the stub detector.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Recorded detections for the replay detector.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Per-frame rule trace destination.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Annotation file; repeatable.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    /// JSON report destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV destination (`metric,key,value`).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Events written by `detect`.
    #[arg(long)]
    pub events: PathBuf,
    /// Ground truth written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV destination (`scope,true_positives,false_positives,false_negatives,precision,recall,f1`).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario spec file; the flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    /// Seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub vehicles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sensors: Option<usize>,
    /// Position jitter standard deviation in metres.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Per-sensor miss probability.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Output annotation file. With several sensors, one file per sensor
    /// is written as `<stem>.<sensor>.<ext>`.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth destination; `<stem>.truth.json` when omitted.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Annotation file; repeatable. A synthetic sequence is used otherwise.
    #[arg(long = "in", conflicts_with_all = ["frames", "vehicles", "seed"])]
    pub inputs: Vec<PathBuf>,
    /// Length of the synthetic sequence.
    #[arg(long, default_value_t = 22_500)]
    pub frames: u64,
    #[arg(long, default_value_t = 24)]
    pub vehicles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include the stub detector. File inputs then need `--truth`.
    #[arg(long)]
    pub with_detector: bool,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Bad invocation: unknown values, missing files, missing companions.
#[derive(Debug)]
pub struct UsageError(pub String);

/// Input that was read but rejected.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}
impl std::error::Error for InvalidInput {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    InvalidInput(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            if exit_code(&err) == 2 {
                eprintln!("run `accid --help` for usage");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
