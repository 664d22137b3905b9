//! `dreim` command-line tool.

mod bench;
mod commands;
mod methods;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dreim", version, about = "Influence maximization with learned node embeddings")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "DREIM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic graph as an edge list.
    Generate(commands::GenerateArgs),
    /// Train a Q-network.
    Train(commands::TrainArgs),
    /// Select seeds on a graph and report their spread.
    Infer(commands::InferArgs),
    /// Estimate the spread of a given seed set.
    Spread(commands::SpreadArgs),
    /// Run the method comparison benchmark and write a CSV report.
    Bench(bench::BenchArgs),
}

/// Invalid flag combinations detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn output_path(path: &Option<PathBuf>) -> Option<&std::path::Path> {
    path.as_deref().filter(|p| p.as_os_str() != "-")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Spread(a) => commands::spread(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let usage_like = e.downcast_ref::<UsageError>().is_some()
                || matches!(
                    e.downcast_ref::<dreim_core::Error>(),
                    Some(dreim_core::Error::Config(_) | dreim_core::Error::Budget { .. })
                );
            eprintln!("error: {e:#}");
            if usage_like {
                eprintln!("\nFor more information, try '--help'.");
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
