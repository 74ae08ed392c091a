//! Experiment CLI: train, gradcheck, infer.

mod commands;
mod config;
mod weights_io;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "lp",
    about = "Constraint-based neural network training by saddle-point optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a config file; writes metrics.jsonl and weights.bin.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Layer-parallel worker count (overrides parallel.workers).
        #[arg(long)]
        workers: Option<usize>,
        /// Seed override (overrides train.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the analytic gradients against finite differences (and, for MLPs
    /// with identity constraints, against backpropagation recovery).
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the forward pass of saved weights over a CSV of inputs.
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_logging() {
    let level = match std::env::var("LP_LOG_LEVEL").as_deref() {
        Ok("error") => "error",
        Ok("debug") => "debug",
        Ok("info") | Err(_) => "info",
        Ok(other) => {
            eprintln!("LP_LOG_LEVEL '{other}' is not one of error, info, debug; using info");
            "info"
        }
    };
    env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp(None)
        .init();
}

fn main() {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version go to stdout with success; usage errors exit 1.
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(commands::EXIT_CONFIG);
            }
            print!("{e}");
            std::process::exit(commands::EXIT_OK);
        }
    };
    let code = match cli.command {
        Command::Train {
            config,
            workers,
            seed,
            out,
        } => commands::cmd_train(&commands::TrainArgs {
            config,
            workers,
            seed,
            out,
        }),
        Command::Gradcheck { config, seed } => {
            commands::cmd_gradcheck(&commands::GradcheckArgs { config, seed })
        }
        Command::Infer { weights, data, out } => {
            commands::cmd_infer(&commands::InferArgs { weights, data, out })
        }
    };
    std::process::exit(code);
}
