use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::files::write_json;

pub const MANIFEST: &str = "manifest.json";

/// Self-description written into every output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Configuration after defaults, config file and flags were merged.
    pub resolved_config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub seeds: Vec<u64>,
    /// SHA-256 of the dataset file the run consumed or produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub threads: usize,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, resolved_config: impl Serialize, started: Instant) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            resolved_config: serde_json::to_value(resolved_config).unwrap_or(serde_json::Value::Null),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
            dataset_sha256: None,
            method: None,
            threads: greenhouse_pinn::parallel::threads(),
            duration_seconds: started.elapsed().as_secs_f64(),
        }
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join(MANIFEST), self)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        crate::files::read_json(&dir.join(MANIFEST))
    }
}
