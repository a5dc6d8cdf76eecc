//! `driftstop`: filtering, optimal stopping and Monte Carlo checks for the
//! unknown drift of a Wiener process.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numerical failure
//! (non-convergence or a failed check).

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use driftstop_core::Error;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NoConvergence { .. } | Error::NonFinite { .. } => Self::numerical(e.to_string()),
            _ => Self::input(e.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Family {
    Gaussian,
    Bernoulli,
    #[value(name = "half_normal", alias = "half-normal")]
    HalfNormal,
    Mixture,
}

#[derive(Parser)]
#[command(name = "driftstop", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation seed; overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write psi_grid.csv and pde_residuals.csv.
    Psi(RunArgs),
    /// Solve the obstacle problem; write value_grid.csv, boundary.csv and
    /// monotonicity_report.json.
    Solve(RunArgs),
    /// Monte Carlo checks of a policy; write verify.json.
    Verify(RunArgs),
    /// Print closed-form quantities as JSON.
    ClosedForm {
        family: Family,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Mean (gaussian, default 0) or offset (mixture, default 1).
        #[arg(long)]
        m: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// Component standard deviation (mixture).
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Simulate paths; write paths.csv, monitor.csv and simulate_summary.json.
    Simulate(RunArgs),
}

fn set_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DRIFTSTOP_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::input(format!(
            "DRIFTSTOP_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    set_threads()?;
    let resolve = |a: RunArgs| {
        let cfg = config::RunConfig::load(&a.config)?;
        config::resolve(cfg, a.out, a.seed)
    };
    match cli.command {
        Command::Psi(a) => commands::psi(&resolve(a)?),
        Command::Solve(a) => commands::solve(&resolve(a)?),
        Command::Verify(a) => commands::verify(&resolve(a)?),
        Command::Simulate(a) => commands::simulate(&resolve(a)?),
        Command::ClosedForm {
            family,
            c,
            beta,
            p,
            m,
            sigma2,
            sigma,
        } => {
            let args = commands::ClosedFormArgs {
                c,
                beta,
                p,
                m,
                sigma2,
                sigma,
            };
            let record = commands::closed_form(family, &args)?;
            let text = serde_json::to_string_pretty(&record).expect("JSON values serialize");
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(CliError::input(format!("cannot write to stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
