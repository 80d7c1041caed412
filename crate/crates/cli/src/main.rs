mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Train, apply and benchmark Hellsemble ensembles on CSV data.
#[derive(Debug, Parser)]
#[command(name = "hellsemble", version)]
pub struct Cli {
    /// Seed for every random choice. Overrides the config's seed; 42 when
    /// neither is given.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print progress details to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an ensemble from a labelled CSV and a JSON config.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Predict labels for a CSV with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Column to ignore if present, typically the label.
        #[arg(long)]
        label: Option<String>,
        /// Add class probabilities p0,p1.
        #[arg(long)]
        proba: bool,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment grid over a directory of CSV datasets.
    Benchmark {
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long)]
        label: String,
        /// Grid config; the reference grid when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value = "benchmark-out")]
        out: PathBuf,
        /// Grid cells evaluated in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Describe a trained model.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
