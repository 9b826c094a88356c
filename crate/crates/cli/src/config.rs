//! Run configuration. A config file is a flat TOML table whose keys are the
//! long flag names; values resolve as file < `SPECLAB_SEED` < flags, and the
//! resolved table is echoed so a run can be repeated from it.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use speclab_core::potentials::Potential;

use crate::CliError;

/// Flags shared by every subcommand. Unset flags leave the file value (or
/// the default) in place.
#[derive(Debug, Clone, Default, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Flags {
    /// zero | power_decay | wigner_von_neumann | sampled_table | seeded_random_decay
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    /// Amplitude B of power_decay and seeded_random_decay.
    #[arg(long = "B", allow_hyphen_values = true)]
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Wigner-von Neumann amplitude.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Wigner-von Neumann resonant quasimomentum.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// File with one value `V(n)` per line, starting at `n = 0`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Truncate the potential after site `cutoff`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u64>,

    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Energy in (-2, 2); takes precedence over `--k`.
    #[arg(long = "E", allow_hyphen_values = true)]
    #[serde(rename = "E", skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    /// Second quasimomentum of a cross sum.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[arg(long = "L")]
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<u64>,
    /// Oracle matrix dimension; defaults to 10 L.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    #[arg(long = "Emin", allow_hyphen_values = true)]
    #[serde(rename = "Emin", skip_serializing_if = "Option::is_none")]
    pub e_min: Option<f64>,
    #[arg(long = "Emax", allow_hyphen_values = true)]
    #[serde(rename = "Emax", skip_serializing_if = "Option::is_none")]
    pub e_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// simpson | contour
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Keep every `stride`-th row of a trace.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Separation count of the scan.
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Comma-separated scale indices.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmin: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmax: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_interval: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_min: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,

    /// free | all
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

/// Fully resolved configuration; every key has a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: String,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    pub c: f64,
    pub k0: f64,
    pub phi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u64>,
    pub k: f64,
    #[serde(rename = "E", skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    #[serde(rename = "Emin")]
    pub e_min: f64,
    #[serde(rename = "Emax")]
    pub e_max: f64,
    pub grid: usize,
    pub method: String,
    pub tol: f64,
    pub stride: u64,
    pub beta: f64,
    pub sigma: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub eps: f64,
    pub scales: String,
    pub kmin: f64,
    pub kmax: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_interval: Option<f64>,
    pub eps_max: f64,
    pub eps_min: f64,
    pub points: usize,
    pub suite: String,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: "zero".into(),
            b: 1.0,
            alpha: 1.0,
            c: 8.0,
            k0: 0.25,
            phi: 0.0,
            table: None,
            seed: 0,
            cutoff: None,
            k: 0.25,
            e: None,
            k2: None,
            l: 1000,
            size: None,
            e_min: -1.0,
            e_max: 1.0,
            grid: 101,
            method: "simpson".into(),
            tol: 1e-8,
            stride: 1,
            beta: 0.5,
            sigma: 0.5,
            n: 10,
            eps: 0.1,
            scales: "1,2,3".into(),
            kmin: 0.1,
            kmax: 0.4,
            c1: None,
            c_interval: None,
            eps_max: 0.1,
            eps_min: 1e-3,
            points: 7,
            suite: "free".into(),
            jobs: 1,
        }
    }
}

pub const SEED_VAR: &str = "SPECLAB_SEED";

impl RunConfig {
    pub fn resolve(file: Option<&Path>, seed_env: Option<&str>, flags: &Flags) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        if let Some(raw) = seed_env {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_VAR} must be an unsigned integer, got {raw:?}")))?;
            let seed = i64::try_from(seed).map_err(|_| CliError::Config(format!("{SEED_VAR} exceeds 2^63 - 1")))?;
            table.insert("seed".into(), toml::Value::Integer(seed));
        }
        let overlay = toml::Table::try_from(flags).map_err(|e| CliError::Config(e.to_string()))?;
        table.extend(overlay);
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved configs serialize")
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        let p = match self.potential.as_str() {
            "zero" => Potential::zero(),
            "power_decay" => Potential::power_decay(self.b, self.alpha)?,
            "wigner_von_neumann" => Potential::wigner_von_neumann(self.c, self.k0, self.phi)?,
            "seeded_random_decay" => Potential::seeded_random_decay(self.b, self.seed)?,
            "sampled_table" => {
                let path = self
                    .table
                    .as_ref()
                    .ok_or_else(|| CliError::Config("sampled_table needs --table".into()))?;
                Potential::sampled_table(read_table(Path::new(path))?)?
            }
            other => return Err(CliError::Config(format!("unknown potential {other:?}"))),
        };
        match self.cutoff {
            Some(l) => Ok(p.cutoff(l)?),
            None => Ok(p),
        }
    }

    pub fn scale_list(&self) -> Result<Vec<u32>, CliError> {
        self.scales
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| CliError::Config(format!("bad scale {s:?} in --scales")))
            })
            .collect()
    }
}

fn read_table(path: &Path) -> Result<Vec<f64>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|_| CliError::Config(format!("{}: bad value {l:?}", path.display())))
        })
        .collect()
}

pub fn out_dir(path: &Option<PathBuf>) -> PathBuf {
    path.clone().unwrap_or_else(|| PathBuf::from("."))
}
