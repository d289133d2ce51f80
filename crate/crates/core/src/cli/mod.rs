//! Command-line experiment runner.
//!
//! `mcfusion run <config.json>` writes `<id>.csv` and `<id>.manifest.json`
//! into the output directory. The manifest echoes the resolved config and
//! can itself be passed to `run`.

pub mod config;
pub mod experiments;
pub mod format;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{ConfigError, ExperimentConfig};
pub use experiments::Outcome;

/// Exit status for a config that does not parse or validate.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status when a calibration target cannot be met.
pub const EXIT_INFEASIBLE: i32 = 3;
/// Exit status for runtime failures and failed validations.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "mcfusion", version, about = "Fusion detection experiments over molecular reporting channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a JSON config or run manifest.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
        /// Worker threads; all cores when unset.
        #[arg(long, env = "MCFUSION_THREADS")]
        threads: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot start worker threads: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Model(crate::Error::Infeasible { .. }) => EXIT_INFEASIBLE,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    csv: String,
    rows: usize,
    status: &'static str,
    timings: Timings,
}

#[derive(Debug, Serialize)]
struct Timings {
    total_seconds: f64,
}

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct Report {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub outcome: Outcome,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.outcome.infeasible {
            EXIT_INFEASIBLE
        } else if matches!(self.outcome.validation, Some((p, t)) if p != t) {
            EXIT_FAILURE
        } else {
            0
        }
    }

    fn status(&self) -> &'static str {
        match self.exit_code() {
            0 => "ok",
            EXIT_INFEASIBLE => "infeasible",
            _ => "validation_failed",
        }
    }
}

/// Loads, runs and writes one experiment.
pub fn run(config_path: &Path, output_dir: &Path) -> Result<Report, CliError> {
    let start = Instant::now();
    let cfg = ExperimentConfig::load(config_path)?;
    let setting = experiments::Setting::resolve(&cfg).map_err(|e| ConfigError(e.to_string()))?;
    let outcome = experiments::run(&cfg, &setting)?;
    std::fs::create_dir_all(output_dir)?;
    let csv = output_dir.join(format!("{}.csv", cfg.id()));
    let manifest = output_dir.join(format!("{}.manifest.json", cfg.id()));
    format::write_csv(BufWriter::new(File::create(&csv)?), &outcome.rows)?;
    let report = Report { csv, manifest, outcome };
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        csv: format!("{}.csv", cfg.id()),
        rows: report.outcome.rows.len(),
        status: report.status(),
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    let mut text = serde_json::to_string_pretty(&m).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(&report.manifest, text)?;
    Ok(report)
}

/// Entry point shared by the binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let Command::Run {
        config,
        output_dir,
        threads,
        quiet,
    } = cli.command;
    let go = || run(&config, &output_dir);
    let result = match threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return EXIT_CONFIG;
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(go),
            Err(e) => Err(e.into()),
        },
        None => go(),
    };
    match result {
        Ok(report) => {
            let code = report.exit_code();
            if !quiet {
                println!("wrote {} ({} rows)", report.csv.display(), report.outcome.rows.len());
                println!("wrote {}", report.manifest.display());
                if let Some((passed, total)) = report.outcome.validation {
                    let verdict = if passed == total { "PASS" } else { "FAIL" };
                    println!("validate: {verdict} ({passed}/{total} points within the 3-sigma half-width)");
                }
            }
            if code == EXIT_INFEASIBLE {
                eprintln!("error: some calibration targets are infeasible; rows are flagged in the CSV");
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
