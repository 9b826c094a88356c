use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Marginal,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Audit {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

/// Audit results of a run; names are unique.
#[derive(Debug, Default)]
pub struct Audits(Vec<Audit>);

impl Audits {
    pub fn record(&mut self, name: &str, status: Status, detail: impl Into<String>) {
        assert!(self.0.iter().all(|a| a.name != name), "audit {name} recorded twice");
        self.0.push(Audit {
            name: name.into(),
            status,
            detail: detail.into(),
        });
    }

    /// `Pass` when `ok`, `Fail` otherwise.
    pub fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.record(name, if ok { Status::Pass } else { Status::Fail }, detail);
    }

    pub fn worst(&self) -> Status {
        let mut w = Status::Pass;
        for a in &self.0 {
            match a.status {
                Status::Fail => return Status::Fail,
                Status::Marginal => w = Status::Marginal,
                Status::Pass => {}
            }
        }
        w
    }

    /// `(name, status, detail)` rows in recording order.
    pub fn snapshot(&self) -> Vec<(String, String, String)> {
        self.0
            .iter()
            .map(|a| {
                let status = serde_json::to_value(a.status).expect("statuses serialize");
                (
                    a.name.clone(),
                    status.as_str().unwrap_or_default().to_string(),
                    a.detail.clone(),
                )
            })
            .collect()
    }

    pub fn into_vec(self) -> Vec<Audit> {
        self.0
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub speclab: &'static str,
    pub speclab_core: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: Option<RunConfig>,
    pub versions: Versions,
    pub wall_time_s: f64,
    pub audits: Vec<Audit>,
    pub outputs: Vec<String>,
    pub error: Option<String>,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifests serialize");
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }
}

pub fn versions() -> Versions {
    Versions {
        speclab: env!("CARGO_PKG_VERSION"),
        speclab_core: speclab_core::VERSION,
    }
}
