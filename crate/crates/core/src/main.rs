use std::path::PathBuf;
use std::process::ExitCode;

use adiabatic_lab::cli::{model_listing, run, RunOverrides};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adiabatic-lab", about = "Adiabatic evolution experiments with and without a spectral gap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory; defaults to $ADIABATIC_LAB_OUTPUT/<config name>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the model catalog.
    ListModels,
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, out, workers, seed } => match run(&config, &RunOverrides { out, workers, seed }) {
            Ok(outcome) => {
                for v in &outcome.violations {
                    eprintln!("assertion failed: {v}");
                }
                println!("{}", outcome.out_dir.display());
                ExitCode::from(outcome.exit_code())
            }
            Err(e) => {
                eprintln!("error: {e}");
                let mut source = std::error::Error::source(&e);
                while let Some(s) = source {
                    eprintln!("  caused by: {s}");
                    source = s.source();
                }
                ExitCode::from(1)
            }
        },
        Command::ListModels => {
            for line in model_listing() {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
