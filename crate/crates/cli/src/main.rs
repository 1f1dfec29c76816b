//! `liveness`: synthesize datasets, extract features, train and evaluate
//! classifiers, run challenge sessions and time pipeline stages.

mod bench;
mod challenge;
mod eval;
mod extract;
mod output;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use output::{Context, Usage};

#[derive(Debug, Parser)]
#[command(name = "liveness", version, about = "Implicit-3D face liveness detection")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Working image width in pixels.
    #[arg(long, global = true, default_value_t = 480)]
    pub width: usize,
    /// Working image height in pixels.
    #[arg(long, global = true, default_value_t = 270)]
    pub height: usize,
    /// Worker threads; 1 keeps runs reproducible in wall-clock order.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Base directory for relative `--out` paths.
    #[arg(long, global = true, env = "LIVENESS_OUT_ROOT")]
    pub out_root: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    #[serde(skip)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a labeled dataset of flash or stereo captures.
    Synth(synth::SynthArgs),
    /// Compute one feature vector per manifest record.
    Extract(extract::ExtractArgs),
    /// Train a liveness or flash-direction classifier.
    Train(train::TrainArgs),
    /// Holdout, leave-one-subject-out, resolution sweep or model test.
    Eval(eval::EvalArgs),
    /// Verify a challenge session, stored or simulated.
    Challenge(challenge::ChallengeArgs),
    /// Time pipeline stages.
    Bench(bench::BenchArgs),
}

fn init_logging(g: &Global) {
    let level = match (g.quiet, g.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<Usage>() || matches!(e.downcast_ref::<liveness_core::Error>(), Some(liveness_core::Error::Argument(_)))
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.global);
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.jobs.max(1))
        .build_global()
        .map_err(anyhow::Error::from)
        .and_then(|_| {
            let ctx = Context::new(cli.global);
            match cli.command {
                Command::Synth(a) => synth::run(&ctx, &a),
                Command::Extract(a) => extract::run(&ctx, &a),
                Command::Train(a) => train::run(&ctx, &a),
                Command::Eval(a) => eval::run(&ctx, &a),
                Command::Challenge(a) => challenge::run(&ctx, &a),
                Command::Bench(a) => bench::run(&ctx, &a),
            }
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
