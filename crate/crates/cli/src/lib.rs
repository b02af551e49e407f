//! Command-line front end: config parsing, the four subcommands and the
//! mapping of failures to exit codes.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

pub const OUT_ENV: &str = "FRACMORSE_OUT";

#[derive(Debug, Parser)]
#[command(name = "fracmorse", version, about = "Fractional eigenpairs and critical points on an interval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides `solver.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Run `solve` even when the hypothesis check fails.
    #[arg(long, global = true)]
    pub force: bool,

    /// Output directory; beats `FRACMORSE_OUT` and `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Eigenpairs of the weighted problem.
    Spectrum,
    /// Hypothesis check, then the configured critical-point searches.
    Solve,
    /// Invariant suite with a pass/fail matrix.
    Verify,
    /// Stiffness and mass matrices as CSV triplets.
    Assemble,
}

/// Failures with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Solver(String),
    Hypotheses(Vec<String>),
    Verify(Vec<String>),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Hypotheses(_) => 4,
            Failure::Verify(_) => 5,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid configuration: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::Hypotheses(c) => write!(f, "hypothesis check failed (use --force to run anyway):\n  {}", c.join("\n  ")),
            Failure::Verify(c) => write!(f, "failing checks: {}", c.join(", ")),
            Failure::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<fracmorse::Error> for Failure {
    fn from(e: fracmorse::Error) -> Self {
        match e {
            fracmorse::Error::Io(_) | fracmorse::Error::Json(_) => Failure::Io(e.to_string()),
            fracmorse::Error::Precondition(_) => Failure::Validation(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Validation(e.0)
    }
}

/// `--out`, then `FRACMORSE_OUT`, then `output.dir`, then `out`.
pub fn output_dir(flag: Option<PathBuf>, env: Option<OsString>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| env.filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .ok_or_else(|| Failure::Validation("--config <path> is required".into()))?;
    let cfg = RunConfig::load(&path)?;
    let dir = output_dir(cli.out, std::env::var_os(OUT_ENV), &cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    let seed = cli.seed.unwrap_or(cfg.solver.seed);
    match cli.command {
        Command::Spectrum => commands::spectrum(&cfg, &dir),
        Command::Solve => commands::solve(&cfg, seed, cli.force, &dir),
        Command::Verify => commands::verify(&cfg, seed, &dir),
        Command::Assemble => commands::assemble(&cfg, &dir),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}
