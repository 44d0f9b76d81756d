//! `mta`: batch experiment runner for the causal attribution pipeline.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "mta", version, about = "Causal multi-touch attribution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset.
    Gen(Common),
    /// Train the attribution model on the training split.
    Train(Common),
    /// Write per-touch attributions for the held-out split.
    Attribute(Common),
    /// Score the trained model on the held-out split.
    Eval(Common),
    /// Fit every model and write the comparison table.
    Bench(Common),
    /// Retrain across the proxy relevance and leakage grid.
    Sensitivity(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (TOML), or `fixture:<name>` for a built-in one.
    #[arg(long)]
    pub config: String,
    /// Root directory for datasets, checkpoints and reports.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides both the data and the model seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Proceed even when artifact hashes disagree with the config.
    #[arg(long)]
    pub force: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(c) => commands::gen(&c),
        Command::Train(c) => commands::train(&c),
        Command::Attribute(c) => commands::attribute(&c),
        Command::Eval(c) => commands::eval(&c),
        Command::Bench(c) => commands::bench(&c),
        Command::Sensitivity(c) => commands::sensitivity(&c),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
