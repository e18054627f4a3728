//! `nhext` command line: system validation, condition checks, extension
//! search, simulation, comparison and Gauss-type checks.
//!
//! Every command writes a JSON report (`"schema": 1`) to the output
//! directory and to stdout. Exit codes: 0 pass, 2 negative verdict, 1 error.

mod commands;
mod config;
mod output;
pub mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::Value;

pub use config::{Tolerances, DEFAULT_SAMPLES};

pub const SCHEMA: u32 = 1;

#[derive(Parser, Debug, Clone)]
#[command(name = "nhext", version, about = "Nonholonomic systems and their geodesic extensions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Load a system and report its frame and metric checks.
    Validate,
    /// On-constraint agreement of the extensions, or conditions and
    /// certification of the metric given with `--metric-file`.
    Check,
    /// Fit the ansatz, complete and certify the metric.
    Extend {
        /// Constant `ĝ_ij = α δ_ij`.
        #[arg(long, conflicts_with = "beta", allow_negative_numbers = true)]
        alpha: Option<f64>,
        /// `ĝ_ij = β g_ij`.
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        /// Skip the Chaplygin route.
        #[arg(long)]
        no_chaplygin: bool,
    },
    /// Integrate one spray and write CSV (and SVG with `--plot`).
    Simulate {
        /// nonholonomic, geodesic, ext_projection, ext_nh_connection,
        /// ext_barred or geodesic_of_extension (needs `--metric-file`).
        #[arg(long, default_value = "nonholonomic")]
        kind: String,
        /// Projection `a,b` of coordinates for the SVG plot.
        #[arg(long)]
        plot: Option<String>,
    },
    /// Nonholonomic trajectory against the geodesic of `--metric-file`.
    Compare {
        /// Size of the perturbations of the initial coordinate velocity.
        #[arg(long, default_value_t = 0.01)]
        perturb: f64,
        /// Coordinates whose velocity is perturbed (default: all).
        #[arg(long, value_delimiter = ',')]
        perturb_coords: Vec<String>,
        #[arg(long)]
        plot: Option<String>,
    },
    /// Gauss-type checks for `--metric-file` (or the fitted candidate).
    Gauss,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Built-in system: disk, carriage or particle.
    #[arg(long, global = true)]
    pub system: Option<String>,
    #[arg(long, global = true)]
    pub system_file: Option<PathBuf>,
    /// `name=value`, repeatable.
    #[arg(long = "param", global = true)]
    pub params: Vec<String>,
    /// `coord=lo:hi`, repeatable.
    #[arg(long = "box", global = true)]
    pub boxes: Vec<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, global = true, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, global = true)]
    pub ansatz_file: Option<PathBuf>,
    #[arg(long, global = true)]
    pub metric_file: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// `key=value` with key in feas, force, trajectory, gauss_a, gauss_b.
    #[arg(long = "tol", global = true)]
    pub tols: Vec<String>,
    /// Initial configuration, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub q: Vec<f64>,
    /// Initial quasi-velocities: `m` constrained or all `n` components.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub v: Vec<f64>,
    /// Do not print the report to stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

/// Failure of a run, with a module-qualified code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn args(message: impl Into<String>) -> Self {
        CliError {
            code: "cli.args".into(),
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: "cli.io".into(),
            message: message.into(),
        }
    }
}

impl From<nhext_core::Error> for CliError {
    fn from(e: nhext_core::Error) -> Self {
        CliError {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone)]
pub struct Outcome {
    /// 0 or 2.
    pub code: i32,
    pub report: Value,
    pub verdict: String,
    /// Files written, report first.
    pub artifacts: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    commands::run(cli)
}

/// Parses `args`, runs and prints; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(out) => {
            if !cli.common.quiet {
                println!("{}", output::to_json(&out.report));
            }
            eprintln!("{}", out.verdict);
            out.code
        }
        Err(e) => {
            eprintln!("{e}");
            1
        }
    }
}
