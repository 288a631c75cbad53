use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kvbeam::cli;
use kvbeam::config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "kvbeam",
    about = "Spectral-Galerkin beam discretization, reduced-order output-regulation \
             controller synthesis and closed-loop simulation"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the reduced-order controller and export its matrices.
    Design {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate the closed loop from exported controller files.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Controller directory (default: <out>/controller).
        #[arg(long)]
        controller: Option<PathBuf>,
    },
    /// Design and simulate both controllers on a common reference.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the oracle and property-test report.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the randomized property suites.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Controller directory to cross-check (optional).
        #[arg(long)]
        controller: Option<PathBuf>,
    },
    /// Dump the assembled Galerkin matrices.
    Matrices {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> kvbeam::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run() -> kvbeam::Result<bool> {
    let args = Args::parse();
    match args.command {
        Command::Design { config, out } => {
            let config = load_config(&config)?;
            cli::cmd_design(&config, &out)?;
            Ok(true)
        }
        Command::Simulate {
            config,
            out,
            controller,
        } => {
            let config = load_config(&config)?;
            let ctrl_dir = cli::controller_dir_for(&out, controller);
            cli::cmd_simulate(&config, &out, &ctrl_dir)?;
            Ok(true)
        }
        Command::Compare { config, out } => {
            let config = load_config(&config)?;
            cli::cmd_compare(&config, &out)?;
            Ok(true)
        }
        Command::Verify {
            config,
            out,
            seed,
            controller,
        } => {
            let config = load_config(&config)?;
            cli::cmd_verify(&config, out.as_deref(), seed, controller.as_deref())
        }
        Command::Matrices { config, out } => {
            let config = load_config(&config)?;
            cli::cmd_matrices(&config, &out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
