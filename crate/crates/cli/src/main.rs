mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CalibrateArgs, Context, EvalArgs, RecordArgs, ReplayArgs, RunArgs, SynthArgs, TrainArgs};
use error::CliError;

/// Sparse inertial motion capture from a wrist watch and a pocket phone.
#[derive(Debug, Parser)]
#[command(name = "mocap", version)]
struct Cli {
    /// Session configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding pose.mckp and velocity.mckp.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic training dataset from procedural or file clips.
    Synth(SynthArgs),
    /// Train both estimators on a dataset and write checkpoints.
    Train(TrainArgs),
    /// Build a calibration profile from same-height and T-pose recordings.
    Calibrate(CalibrateArgs),
    /// Run a live session against the configured endpoint.
    Run(RunArgs),
    /// Re-run the engine on a recording.
    Replay(ReplayArgs),
    /// Record raw device traffic, live or simulated.
    Record(RecordArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::new(cli.config.as_deref(), cli.seed, cli.checkpoint)?;
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Calibrate(a) => commands::calibrate(&ctx, a),
        Command::Run(a) => commands::run(&ctx, a),
        Command::Replay(a) => commands::replay(&ctx, a),
        Command::Record(a) => commands::record(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            eprintln!("error: USAGE: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {message}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
