//! `achmetric`: runs the Einstein recursion and volume expansion on a model
//! described by a JSON config and writes a JSON or CSV report.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 invalid config or
//! model, 3 solver failure, 4 requested values outside the trusted window.

mod config;
mod scenarios;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Format, Overrides, RunConfig, Scenario};

#[derive(Parser, Debug)]
#[command(name = "achmetric", version, about = "Approximately Einstein ACH metrics on homogeneous models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve on one model and report jets, residual orders, obstructions and volume coefficients
    Solve(Common),
    /// Track the log coefficient along a family of almost CR structures
    SweepJ(Common),
    /// Compare obstructions and log coefficient under constant contact rescalings
    RescaleCheck(Common),
    /// Solve on flat Heisenberg models and check that everything vanishes
    FlatCheck(Common),
    /// Compare quadrature of the volume with its asymptotic series
    Profile(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; `flat-check` runs with defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Solver tolerance for vanishing Einstein coefficients
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    trunc_extra: Option<i32>,
    /// Seed for `random_torsion` models
    #[arg(long)]
    seed: Option<u64>,
}

/// A run that could not produce its report.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_CHECK: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_WINDOW: u8 = 4;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }
}

/// Exit code for a library error.
pub fn error_code(e: &achmetric::Error) -> u8 {
    use achmetric::Error::*;
    match e {
        WindowTooLarge(_) | OutOfWindow { .. } => EXIT_WINDOW,
        NonPositiveLevi(_) | JacobiViolation(_) | InvalidModel(_) | IncompatibleJ(_) | Dimension(_) | Parse(_)
        | BoundaryMismatch(_) => EXIT_CONFIG,
        LeadingZero | OddLeadingDegree(_) | NonPositiveLeading(_) | SingularSystem(_) | SingularStage { .. } => {
            EXIT_SOLVER
        }
    }
}

impl From<achmetric::Error> for Failure {
    fn from(e: achmetric::Error) -> Self {
        Failure { code: error_code(&e), message: e.to_string() }
    }
}

fn run(scenario: Scenario, common: Common) -> Result<bool, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None if scenario == Scenario::FlatCheck => RunConfig::default(),
        None => return Err(Failure::config("--config is required for this command")),
    };
    cfg.apply(&Overrides {
        out: common.out,
        format: common.format,
        tol: common.tol,
        trunc_extra: common.trunc_extra,
        seed: common.seed,
    });
    cfg.validate(scenario)?;
    let format = cfg.format(scenario);
    let report = match scenario {
        Scenario::Solve => scenarios::run_solve(&cfg)?,
        Scenario::SweepJ => scenarios::sweep_j(&cfg)?,
        Scenario::RescaleCheck => scenarios::rescale(&cfg)?,
        Scenario::FlatCheck => scenarios::flat_check(&cfg)?,
        Scenario::Profile => scenarios::profile(&cfg)?,
    };
    let bytes = match format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(&report.json).map_err(|e| Failure::config(e.to_string()))?;
            v.push(b'\n');
            v
        }
        Format::Csv => report.csv.ok_or_else(|| Failure::config("csv output not available"))?,
    };
    match &cfg.output.path {
        Some(p) => std::fs::write(p, &bytes).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?,
        None => std::io::stdout().write_all(&bytes).map_err(|e| Failure::config(e.to_string()))?,
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, common) = match cli.command {
        Command::Solve(c) => (Scenario::Solve, c),
        Command::SweepJ(c) => (Scenario::SweepJ, c),
        Command::RescaleCheck(c) => (Scenario::RescaleCheck, c),
        Command::FlatCheck(c) => (Scenario::FlatCheck, c),
        Command::Profile(c) => (Scenario::Profile, c),
    };
    match run(scenario, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("achmetric: one or more checks failed");
            ExitCode::from(EXIT_CHECK)
        }
        Err(f) => {
            eprintln!("achmetric: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
