//! `ecmkit` command-line front end.
//!
//! Exit codes: 0 success, 1 parse or validation error, 2 unsupported
//! (machine, simd) pair, 3 measurement rows without a matching prediction.

mod commands;
mod output;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecmkit::{Residence, SimdLevel};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ecmkit::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(ecmkit::Error::UnsupportedSimd { .. } | ecmkit::Error::MissingTiming { .. }) => 2,
            CliError::Model(ecmkit::Error::UnmatchedRecord { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "ecmkit", version, about = "Analytic ECM performance predictions for loop kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Machine and kernel arguments take a fixture name or a file path.
#[derive(Debug, Args)]
pub struct Target {
    #[arg(long)]
    pub machine: String,
    #[arg(long)]
    pub kernel: String,
    #[arg(long)]
    pub simd: SimdLevel,
    /// Core clock in GHz; defaults to the machine's nominal clock.
    #[arg(long)]
    pub freq: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Contribution and prediction tuples for one kernel.
    Predict {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "mem")]
        residence: Residence,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Multicore runtime for 1..N threads.
    Scale {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value = "mem")]
        residence: Residence,
        #[arg(long, conflicts_with = "all", required_unless_present = "all")]
        threads: Option<usize>,
        /// Every core count of the machine.
        #[arg(long)]
        all: bool,
        /// Add throughput in work units per second.
        #[arg(long)]
        work_rate: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Fewest cores reaching a bandwidth-utilization threshold, per clock frequency.
    Saturate {
        #[arg(long)]
        machine: String,
        /// CSV with `kernel,weight` columns; defaults to the bundled kernel mix.
        #[arg(long)]
        kernel_set: Option<PathBuf>,
        #[arg(long)]
        simd: SimdLevel,
        /// Comma-separated list of core clocks in GHz.
        #[arg(long, value_delimiter = ',', required = true)]
        freqs: Vec<f64>,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Score predictions against a measurement CSV.
    Validate {
        /// Restrict to one machine (name or file).
        #[arg(long)]
        machine: Option<String>,
        #[arg(long)]
        measurements: PathBuf,
        /// Kernel names or files; defaults to every bundled kernel.
        #[arg(long, num_args = 1..)]
        kernels: Vec<String>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Regenerate all tables and figure data series as CSV files.
    Report {
        /// `both` or a single machine name.
        #[arg(long, default_value = "both")]
        machine: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the bundled fixtures and compare them with their transcribed values.
    Verify,
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Predict { target, residence, format } => commands::predict(&target, residence, format),
        Command::Scale {
            target,
            residence,
            threads,
            all,
            work_rate,
            format,
        } => commands::scale(&target, residence, if all { None } else { threads }, work_rate, format),
        Command::Saturate {
            machine,
            kernel_set,
            simd,
            freqs,
            threshold,
            format,
        } => commands::saturate(&machine, kernel_set.as_deref(), simd, &freqs, threshold, format),
        Command::Validate {
            machine,
            measurements,
            kernels,
            format,
        } => commands::validate(machine.as_deref(), &measurements, &kernels, format),
        Command::Report { machine, out } => report::write_report(&machine, &out),
        Command::Verify => commands::verify(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    // Output is assembled in full before anything is printed.
    match run(cli) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
