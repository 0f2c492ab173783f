//! `kangrid`: run the adaptive-grid KAN benchmarks and report on them.

mod config;
mod plot;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{read_config, resolve, ConfigFile, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Artifact(String),
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error("{failed} of {total} cells failed; see {manifest}")]
    CellsFailed {
        failed: usize,
        total: usize,
        manifest: PathBuf,
    },
    #[error(transparent)]
    Train(#[from] kangrid::training::TrainError),
    #[error(transparent)]
    Stats(#[from] kangrid::stats::StatsError),
    #[error(transparent)]
    Benchmark(#[from] kangrid::benchmarks::BenchmarkError),
    #[error(transparent)]
    Network(#[from] kangrid::network::NetworkError),
}

#[derive(Parser)]
#[command(name = "kangrid", version, about = "Adaptive-grid KAN benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (task, strategy, seed) cell and write the artifacts.
    Run(RunArgs),
    /// Print the comparison table of a results directory.
    Report {
        /// Directory written by `run`.
        dir: PathBuf,
    },
    /// Redraw the figures of a results directory from its checkpoints.
    Plot {
        /// Directory written by `run`.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// gaussian, synthetic, feynman or helmholtz.
    #[arg(long)]
    experiment: Option<String>,
    /// input, curvature or both.
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated seeds, e.g. 0,1,2.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fraction of the iteration budget, in (0, 1].
    #[arg(long)]
    scale: Option<f64>,
    /// Print the resolved config and exit without training.
    #[arg(long)]
    dry_run: bool,
    /// Worker threads for running cells.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let file = match &args.config {
                Some(path) => read_config(path)?,
                None => ConfigFile::default(),
            };
            let flags = Overrides {
                experiment: args.experiment,
                strategy: args.strategy,
                seeds: args.seeds,
                scale: args.scale,
                out: args.out,
                threads: args.threads,
            };
            let cfg = resolve(file, flags)?;
            if args.dry_run {
                print!("{}", run::to_json(&cfg.resolved));
                return Ok(());
            }
            let artifact = run::run(&cfg)?;
            print!("{}", report::render(&artifact.report));
            log::info!("artifacts written to {}", cfg.out.display());
            Ok(())
        }
        Command::Report { dir } => {
            let artifact = run::load_artifact(&dir)?;
            print!("{}", report::render(&artifact.report));
            Ok(())
        }
        Command::Plot { dir } => {
            let artifact = run::load_artifact(&dir)?;
            for path in plot::write_figures(&dir, &artifact)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
