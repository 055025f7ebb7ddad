//! `bwalk`: seeded simulations and checks for random walks on Bernoulli
//! matrix ensembles.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bernoulli_walk::stats::ComparisonReport;
use bernoulli_walk::error::Error;

use config::{Command, Flags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "bwalk", version = output::VERSION, about = "Random walks on Bernoulli matrix ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Hamming-distance trajectories, exact TV curve and OU comparison.
    Hamming,
    /// Eigenvalue trajectories and an optional stationary histogram.
    Spectra,
    /// Drift and diffusion estimates compared with theory.
    Moments,
    /// Exhaustive oracle checks for small hypercubes.
    Oracle,
    /// Stationary Hamming law, limiting density and spacing statistics.
    Stationary,
}

/// Everything that ends a run early, mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Io(String),
    Checks(Vec<ComparisonReport>),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Numerical(_) | Self::Io(_) => 2,
            Self::Checks(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Contract(_) | Error::Guard { .. } | Error::Domain(_) => Self::Usage(e.to_string()),
            Error::Numerical { .. } | Error::Singular(_) => Self::Numerical(e.to_string()),
            Error::Io(_) => Self::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let command = match cli.command {
        Sub::Hamming => Command::Hamming,
        Sub::Spectra => Command::Spectra,
        Sub::Moments => Command::Moments,
        Sub::Oracle => Command::Oracle,
        Sub::Stationary => Command::Stationary,
    };
    let config = RunConfig::resolve(command, cli.flags)?;
    if let Some(threads) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    }
    log::info!("{} {} config={}", command.name(), config.kind, config.hash());
    let checks = match command {
        Command::Hamming => commands::hamming(&config)?,
        Command::Spectra => commands::spectra(&config)?,
        Command::Moments => commands::moments(&config)?,
        Command::Oracle => commands::oracle_suite(&config)?,
        Command::Stationary => commands::stationary(&config)?,
    };
    for c in &checks {
        println!("{} {}: {:.3e} (limit {:.3e})", if c.pass { "PASS" } else { "FAIL" }, c.test, c.statistic, c.threshold);
    }
    let failed: Vec<_> = checks.into_iter().filter(|c| !c.pass).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Checks(failed))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Numerical(m) => eprintln!("numerical error: {m}"),
                Failure::Io(m) => eprintln!("i/o error: {m}"),
                Failure::Checks(failed) => eprintln!("{} check(s) failed", failed.len()),
            }
            ExitCode::from(f.code())
        }
    }
}
