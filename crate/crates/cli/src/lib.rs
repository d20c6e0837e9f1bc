//! Command-line driver for the `szilard` binary.
//!
//! Commands compute everything in memory first ([`execute`]) and only then
//! touch the file system ([`run`]), so a failing run leaves no partial output
//! and tests can compare results without temporary files.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "szilard",
    version,
    about = "Optimal finite-time protocols for a single-electron Szilard engine"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Optimal protocol for one branch at one duration.
    Protocol {
        #[arg(long, allow_negative_numbers = true)]
        gamma_tau: f64,
        /// Measured bit: 0 (dot found empty) or 1 (occupied).
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
        branch: u8,
        /// Base name of the output files.
        #[arg(long, default_value = "protocol")]
        stem: String,
    },
    /// Optimal and naive performance over the configured γτ list.
    Sweep {
        /// Also run Monte Carlo batches of `n_cycles` cycles per point.
        #[arg(long)]
        montecarlo: bool,
    },
    /// Jump-process simulation of one branch protocol, or of the full cycle
    /// when both branch protocols are given.
    Simulate {
        #[arg(long = "protocol", value_name = "FILE", required = true, num_args = 1..=2)]
        protocols: Vec<PathBuf>,
        /// Also write every trajectory's jump times as JSON lines.
        #[arg(long)]
        dump_jumps: bool,
    },
    /// Sensitivity of power and fluctuations to a constant level offset.
    Drift {
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
        branch: u8,
    },
    /// Run the numerical self-checks and print one line per check.
    Validate,
}

/// Bad input from the user: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub struct OutputFile {
    pub name: String,
    pub contents: Vec<u8>,
}

/// Everything a command produces.
#[derive(Default)]
pub struct Outcome {
    pub files: Vec<OutputFile>,
    pub stdout: String,
    /// Failures that were reported but did not stop the run.
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.contents.as_slice())
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Resolves the configuration and runs the command on a pool of
/// `--threads` workers, without writing anything.
pub fn execute(cli: &Cli) -> anyhow::Result<(RunConfig, Outcome)> {
    let config = RunConfig::resolve(&cli.overrides)?;
    let run = || commands::dispatch(&cli.command, &config, &cli.overrides);
    let outcome = match cli.overrides.threads {
        Some(0) => return Err(UsageError("--threads must be >= 1".into()).into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(run)?,
        None => run()?,
    };
    Ok((config, outcome))
}

fn write_outputs(config: &RunConfig, outcome: &Outcome) -> anyhow::Result<()> {
    if outcome.files.is_empty() {
        return Ok(());
    }
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for f in &outcome.files {
        let path = dir.join(&f.name);
        std::fs::write(&path, &f.contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Exit code for an error: usage problems and invalid inputs give 2,
/// everything else 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<szilard_core::Error>() {
        Some(
            szilard_core::Error::InvalidParameter { .. }
            | szilard_core::Error::MalformedProtocol { .. }
            | szilard_core::Error::UnsupportedRatio(_),
        ) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Full command-line entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = execute(&cli).and_then(|(config, outcome)| {
        write_outputs(&config, &outcome)?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            if outcome.failures.is_empty() {
                EXIT_OK
            } else {
                for f in &outcome.failures {
                    eprintln!("error: {f}");
                }
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
