//! The `tss` command-line tool: dataset generation, training, pseudo-label
//! and smoothing inspection, and log plotting.

pub mod commands;
pub mod error;
pub mod manifest;

use clap::{Parser, Subcommand};

use crate::commands::{generate, plot, pseudo, smooth, train};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "tss",
    version,
    about = "Semi-supervised temporal action segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a grammar file.
    Generate(generate::GenerateArgs),
    /// Train one or more modes over several labelled splits.
    Train(train::TrainArgs),
    /// Show the continuity pseudo-labels of one video.
    Pseudo(pseudo::PseudoArgs),
    /// Show the boundary-smoothed targets of a label file.
    Smooth(smooth::SmoothArgs),
    /// Draw training logs as an SVG chart.
    Plot(plot::PlotArgs),
}

/// Worker threads for independent training runs, from `TSS_THREADS`.
pub fn thread_count() -> CliResult<usize> {
    match std::env::var("TSS_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "TSS_THREADS must be a positive integer, got `{v}`"
            ))),
        },
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(args) => generate::run(&args),
        Command::Train(args) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(thread_count()?)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| train::run(&args)).map(|_| ())
        }
        Command::Pseudo(args) => {
            print!("{}", pseudo::run(&args)?);
            Ok(())
        }
        Command::Smooth(args) => {
            print!("{}", smooth::run(&args)?);
            Ok(())
        }
        Command::Plot(args) => plot::run(&args),
    }
}
