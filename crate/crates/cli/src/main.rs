//! `speclab`: traces, spectral densities, oracle comparisons, oscillatory
//! sums, multiscale scans and the embedded-eigenvalue experiment.
//!
//! Every run writes its data as CSV, its result as `report.json` and a
//! `manifest.json` with the resolved configuration, versions, wall time and
//! audit results into `--out`. Exit codes: 0 success, 2 invalid
//! configuration, 3 numerical fault or failed audit, 4 marginal audit.

// `!(x > y)` comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;
mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use speclab_core::Error;
use thiserror::Error as ThisError;

use config::{Flags, RunConfig, SEED_VAR};
use manifest::{Audits, RunManifest, Status, SCHEMA_VERSION};

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::InvalidParameter { .. }
                | Error::InvalidCutoff(_)
                | Error::EnergyOutsideBand(_)
                | Error::QuasimomentumOutOfRange(_)
                | Error::NotUpperHalfPlane(_)
                | Error::LengthMismatch { .. }
                | Error::OutsideWindow(_)
                | Error::HorizonTooLarge { .. } => 2,
                _ => 3,
            },
            CliError::Io(_) | CliError::Csv(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "speclab",
    version,
    about = "Spectral experiments for decaying discrete Schroedinger operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Flat TOML file keyed by long flag names; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pruefer trace at one energy: CSV `n,theta,log_r`.
    Trace(Common),
    /// Truncated spectral density on an energy grid: CSV `E,k,density`.
    Density(Common),
    /// Interval mass by quadrature against the finite-matrix eigen-data.
    OracleCompare(Common),
    /// Harmonically weighted phase sums with drift fits.
    Sums(Common),
    /// Multiscale separated-set scan.
    Scan(Common),
    /// Local dimension fit: CSV `eps,mass,log_eps,log_mass`.
    Dimension(Common),
    /// Wigner-von Neumann resonance experiment.
    Embedded(Common),
    /// Invariant battery; `--suite free` or `--suite all`.
    Verify(Common),
}

impl Command {
    fn split(&self) -> (&'static str, &Common) {
        match self {
            Command::Trace(c) => ("trace", c),
            Command::Density(c) => ("density", c),
            Command::OracleCompare(c) => ("oracle-compare", c),
            Command::Sums(c) => ("sums", c),
            Command::Scan(c) => ("scan", c),
            Command::Dimension(c) => ("dimension", c),
            Command::Embedded(c) => ("embedded", c),
            Command::Verify(c) => ("verify", c),
        }
    }
}

/// What a command hands back for the manifest.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub dir: &'a Path,
    pub audits: Audits,
    pub outputs: Vec<String>,
}

impl Run<'_> {
    pub fn csv_writer(&mut self, name: &str) -> Result<csv::Writer<std::fs::File>, CliError> {
        self.outputs.push(name.to_string());
        Ok(csv::Writer::from_path(self.dir.join(name))?)
    }
}

fn dispatch(name: &str, run: &mut Run) -> Result<serde_json::Value, CliError> {
    match name {
        "trace" => commands::trace(run),
        "density" => commands::density(run),
        "oracle-compare" => commands::oracle_compare(run),
        "sums" => commands::sums(run),
        "scan" => commands::scan(run),
        "dimension" => commands::dimension(run),
        "embedded" => commands::embedded(run),
        "verify" => verify::verify(run),
        _ => unreachable!("clap admits only known subcommands"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let (name, common) = cli.command.split();
    let dir = config::out_dir(&common.out);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("speclab: cannot create {}: {e}", dir.display());
        return ExitCode::from(3);
    }
    let seed_env = std::env::var(SEED_VAR).ok();
    let cfg = RunConfig::resolve(common.config.as_deref(), seed_env.as_deref(), &common.flags);

    let (cfg, result) = match cfg {
        Ok(cfg) => {
            let mut run = Run {
                cfg: &cfg,
                dir: &dir,
                audits: Audits::default(),
                outputs: Vec::new(),
            };
            let value = dispatch(name, &mut run);
            let Run { audits, outputs, .. } = run;
            (Some(cfg), value.map(|v| (v, audits, outputs)))
        }
        Err(e) => (None, Err(e)),
    };

    let (code, error, audits, mut outputs) = match result {
        Ok((value, audits, outputs)) => {
            let text = serde_json::to_string_pretty(&value).expect("reports serialize");
            // a closed stdout must not lose the files below
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            let code = match audits.worst() {
                Status::Pass => 0,
                Status::Fail => 3,
                Status::Marginal => 4,
            };
            let mut outputs = outputs;
            if let Err(e) = std::fs::write(dir.join("report.json"), text + "\n") {
                eprintln!("speclab: {e}");
                return ExitCode::from(3);
            }
            outputs.push("report.json".into());
            (code, None, audits.into_vec(), outputs)
        }
        Err(e) => {
            eprintln!("speclab: {e}");
            (e.exit_code(), Some(e.to_string()), Vec::new(), Vec::new())
        }
    };
    if let Some(cfg) = &cfg {
        if std::fs::write(dir.join("config.toml"), cfg.to_toml()).is_ok() {
            outputs.push("config.toml".into());
        }
    }
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: name.to_string(),
        config: cfg,
        versions: manifest::versions(),
        wall_time_s: start.elapsed().as_secs_f64(),
        audits,
        outputs,
        error,
        exit_code: code as i32,
    };
    if let Err(e) = manifest.write(&dir) {
        eprintln!("speclab: cannot write manifest: {e}");
        return ExitCode::from(3);
    }
    ExitCode::from(code)
}
