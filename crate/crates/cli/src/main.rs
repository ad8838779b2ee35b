//! `gve`: train, evaluate, plot and compare navigation agents.

mod ablation;
mod evaluate;
mod inspect;
mod plot;
mod run;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gve_core::Error;

/// Exit status for configuration errors. Usage errors from argument parsing
/// use the same code.
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "gve", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources shared by the training commands. `--set` wins over
/// the file, which wins over the built-in defaults.
#[derive(Debug, Clone, Args)]
struct ConfigArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set episodes=2000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Harvest the prior graph, train one variant, checkpoint, and score the
    /// validation split.
    Train(train::TrainArgs),
    /// Run a saved checkpoint on a split and write episode records and metrics.
    Evaluate(evaluate::EvaluateArgs),
    /// Draw value-error curves as an SVG chart.
    Plot(plot::PlotArgs),
    /// Train and test several variants over several seeds and tabulate them.
    Ablation(ablation::AblationArgs),
    /// Summarise a prior graph.
    InspectGraph(inspect::InspectArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Plot(a) => plot::run(a),
        Command::Ablation(a) => ablation::run(a),
        Command::InspectGraph(a) => inspect::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            })
        }
    }
}
