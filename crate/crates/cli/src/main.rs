//! `uabs`: build synthetic worlds, decode with uncertainty penalties and
//! analyze the outputs.

mod artifact;
mod commands;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::analyze::AnalyzeArgs;
use commands::decode::DecodeArgs;
use commands::ensemble::EnsembleArgs;
use commands::replay::ReplayArgs;
use commands::report::ReportArgs;
use commands::sweep::SweepArgs;
use commands::world::WorldArgs;
use commands::launch;

#[derive(Debug, Parser)]
#[command(name = "uabs", version, about = "Uncertainty-aware beam search on synthetic worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world.
    World(WorldArgs),
    /// Perturb a world's true model into an ensemble.
    Ensemble(EnsembleArgs),
    /// Decode inputs with one penalty setting.
    Decode(DecodeArgs),
    /// Decode every input over a grid of penalty settings.
    Sweep(SweepArgs),
    /// Relate per-mention uncertainty to hallucination.
    Analyze(AnalyzeArgs),
    /// Summarize a sweep and an optional analysis.
    Report(ReportArgs),
    /// Repeat a recorded run and verify identical outputs.
    Replay(ReplayArgs),
}

fn run(cli: Cli) -> error::Result<()> {
    match cli.command {
        Command::World(a) => launch(&a.resolve()?, &a.out),
        Command::Ensemble(a) => launch(&a.resolve()?, &a.out),
        Command::Decode(a) => launch(&a.resolve()?, &a.out),
        Command::Sweep(a) => launch(&a.resolve()?, &a.out),
        Command::Analyze(a) => launch(&a.resolve()?, &a.out),
        Command::Report(a) => launch(&a.resolve(), &a.out),
        Command::Replay(a) => commands::replay::launch(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "category": e.category(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
