//! `linres`: run a response experiment from a TOML config and write CSV/JSON results.
//!
//! Exit codes: 0 success, 1 runtime error, 2 config error, 3 verification failure.

mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Experiment, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "linres", version, about = "Linear-response experiments on fermionic chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Momentum-resolved Green's functions and their spectra.
    Greens(Common),
    /// Density response chi(q, w) on the correlation-matrix backend.
    Polarizability(Common),
    /// Momentum-selective, position-selective and Hadamard-test runs under noise.
    Compare(Common),
    /// Triangle compression and light-cone pruning of the Trotter circuit.
    Compress {
        #[command(flatten)]
        common: Common,
        /// Chain length; without --config a built-in config is used.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Exact reference traces, spectra and levels.
    Oracle(Common),
}

fn load(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: ".".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    RunConfig::parse(&text)
}

fn resolve(command: Command) -> Result<(RunConfig, Option<usize>), CliError> {
    let (experiment, common, n, steps) = match command {
        Command::Greens(c) => (Experiment::Greens, c, None, None),
        Command::Polarizability(c) => (Experiment::Polarizability, c, None, None),
        Command::Compare(c) => (Experiment::Compare, c, None, None),
        Command::Oracle(c) => (Experiment::Oracle, c, None, None),
        Command::Compress { common, n, steps } => (Experiment::Compress, common, n, steps),
    };
    let mut config = match (&common.config, experiment) {
        (Some(path), _) => load(path)?,
        (None, Experiment::Compress) => RunConfig::compress_default(n.unwrap_or(8), steps.unwrap_or(40)),
        (None, _) => {
            return Err(CliError::Config {
                path: ".".into(),
                message: format!("{} needs --config", experiment.name()),
            })
        }
    };
    if config.experiment != experiment {
        return Err(CliError::Config {
            path: "experiment".into(),
            message: format!("config is for {}, not {}", config.experiment.name(), experiment.name()),
        });
    }
    if let Some(n) = n {
        config.model.n = n;
    }
    if let (Some(s), Some(c)) = (steps, config.compress.as_mut()) {
        c.steps = s;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = common.out {
        config.output = out;
    }
    Ok((config, common.threads))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(cli.command).and_then(|(config, threads)| {
        if let Some(t) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| CliError::Config {
                    path: "--threads".into(),
                    message: e.to_string(),
                })?;
        }
        let files = run::run(&config)?;
        println!("wrote {} files to {}", files.len() + 1, config.output.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("linres: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
