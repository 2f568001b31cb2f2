//! `sc-gan`: forge corpora, train strategy/seed matrices, sweep a corruption
//! knob and plot the results.
//!
//! Exit status is 0 on success, 1 when a run fails (for example a divergence
//! abort) and 2 for configuration or usage errors.

mod commands;
mod error;
mod plot;
mod runner;
mod spec;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Axis, RunFlags};

#[derive(Parser)]
#[command(
    name = "sc-gan",
    version,
    about = "Semi-supervised conditional GAN experiments on synthetic mixtures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clean mixture, corrupt it and write the corpus files.
    Forge {
        /// JSON with `mixture` and `corruption`; built-in defaults if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sample file; provenance goes to `<stem>.provenance.jsonl` beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every (strategy, seed) pair of an experiment spec.
    Train {
        #[arg(long)]
        spec: PathBuf,
        /// Continue runs from their latest checkpoints.
        #[arg(long)]
        resume: bool,
        /// Validate the experiment and exit.
        #[arg(long)]
        dry_run: bool,
        #[arg(long, hide = true)]
        stop_after: Option<u64>,
    },
    /// Repeat the experiment for each value of one corruption knob.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        dry_run: bool,
        #[arg(long, hide = true)]
        stop_after: Option<u64>,
    },
    /// Write SVG figures for a run, train or sweep directory.
    Plot {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Forge { config, out } => commands::forge(config.as_deref(), &out),
        Command::Train {
            spec,
            resume,
            dry_run,
            stop_after,
        } => commands::train(
            &spec,
            RunFlags {
                resume,
                dry_run,
                stop_after,
            },
        ),
        Command::Sweep {
            spec,
            axis,
            values,
            resume,
            dry_run,
            stop_after,
        } => commands::sweep(
            &spec,
            axis,
            &values,
            RunFlags {
                resume,
                dry_run,
                stop_after,
            },
        ),
        Command::Plot { dir } => plot::plot(&dir).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sc-gan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
