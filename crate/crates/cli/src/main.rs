#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks.
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cascadeprune::cascade::Trainer;
use cascadeprune::features::FeatureFamily;
use cascadeprune::synth::SynthMode;
use cascadeprune::Error;

use crate::config::Resolver;

const THREADS_ENV: &str = "CASCADEPRUNE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "cascadeprune", version, about = "Train and run boosted cascade detectors")]
struct Cli {
    /// key=value file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to CASCADEPRUNE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a full cascade and write the model file.
    Train(TrainArgs),
    /// Train single nodes on vector data and tabulate test detection rate by stump count.
    TrainNode(TrainNodeArgs),
    /// Scan images with a model and write detections as CSV.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Print a readable summary of a model file.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    mode: Option<SynthMode>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    positives: Option<usize>,
    /// Negative vectors (vector mode).
    #[arg(long)]
    negatives: Option<usize>,
    /// Background images (patch mode).
    #[arg(long)]
    backgrounds: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    clutter: Option<f64>,
    #[arg(long)]
    test_positives: Option<usize>,
    #[arg(long)]
    test_negatives: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    data: Option<String>,
    /// Comma-separated T:T1 pairs, one per node.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    target_fp: Option<f64>,
    #[arg(long)]
    negatives_per_node: Option<usize>,
    #[arg(long)]
    family: Option<FeatureFamily>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    sample_fraction: Option<f64>,
    #[arg(long)]
    trainer: Option<Trainer>,
    #[arg(long)]
    out: Option<String>,
    /// Per-node CSV report; stdout when omitted.
    #[arg(long)]
    report: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainNodeArgs {
    /// Directory holding train.csv and test.csv; synthesized when omitted.
    #[arg(long)]
    data: Option<String>,
    /// May be repeated; defaults to pruning, adaboost and adaboost+lda.
    #[arg(long)]
    trainer: Vec<Trainer>,
    #[arg(long)]
    t1: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    target_fp: Option<f64>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    positives: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    test_positives: Option<usize>,
    #[arg(long)]
    test_negatives: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    model: Option<String>,
    /// Dataset whose scenes are scanned.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    scale_factor: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    /// PGM images to scan.
    images: Vec<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    detections: Option<String>,
    #[arg(long)]
    truths: Option<String>,
    /// Dataset supplying scenes and truths.
    #[arg(long)]
    data: Option<String>,
    /// Model used to detect when no detections file is given, and for --roc.
    #[arg(long)]
    model: Option<String>,
    /// Node-removal ROC output.
    #[arg(long)]
    roc: Option<String>,
    #[arg(long)]
    scale_factor: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    model: String,
}

fn init_threads(r: &mut Resolver, flag: Option<usize>) -> Result<(), Error> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.parse::<usize>()
                .map_err(|_| Error::ConfigError(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
        ),
        Err(_) => None,
    };
    let Some(n) = r.opt("threads", flag.or(env))? else {
        return Ok(());
    };
    if n == 0 {
        return Err(Error::ConfigError("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::ConfigError(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut r = Resolver::load(cli.config.as_deref())?;
    init_threads(&mut r, cli.threads)?;
    let seed = r.get("seed", cli.seed, 0u64)?;
    match cli.command {
        Command::Synth(a) => commands::synth(a, &mut r, seed),
        Command::Train(a) => commands::train(a, &mut r, seed),
        Command::TrainNode(a) => commands::train_node(a, &mut r, seed),
        Command::Detect(a) => commands::detect(a, &mut r),
        Command::Eval(a) => commands::eval(a, &mut r),
        Command::Inspect(a) => {
            r.log("inspect");
            commands::inspect(a)
        }
    }
}

/// 1 for bad configuration or input files, 2 for failures while running.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigError(_) | Error::Parse { .. } | Error::Io(_) | Error::Csv(_) | Error::InvalidImage(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
