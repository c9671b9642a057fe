//! Command-line front end: simulate scenarios, fit chains, summarize
//! traces, and score partitions.

mod commands;
mod config;
mod ingest;
mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "spanclust",
    version,
    about = "Bayesian spatial functional clustering over spanning-tree partitions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a built-in synthetic scenario to disk.
    Simulate {
        /// Scenario name (for example sim1-poly-gauss-desk, sim2-s1).
        #[arg(long)]
        scenario: String,
        /// Output directory for panel.csv, edges.csv, truth.csv.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the sampler as described by a config file.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override sampler.iterations.
        #[arg(long)]
        iterations: Option<u64>,
        /// Override sampler.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override paths.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from a checkpoint file for another round of iterations.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Point-estimate partition, fitted curves, and plots from a trace.
    Summarize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Compare an estimated membership against a truth membership.
    Metrics {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let threads = std::env::var("SPANCLUST_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1);
    let result = match cli.command {
        Command::Simulate {
            scenario,
            out,
            seed,
        } => commands::simulate::run(&scenario, &out, seed),
        Command::Fit {
            config,
            iterations,
            seed,
            out,
            resume,
        } => commands::fit::run(
            &config,
            commands::fit::FitOverrides {
                iterations,
                seed,
                out,
                resume,
            },
            threads,
        ),
        Command::Summarize { config, trace } => commands::summarize::run(&config, &trace),
        Command::Metrics {
            estimate,
            truth,
            out,
        } => commands::metrics::run(&estimate, &truth, out.as_deref()),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
