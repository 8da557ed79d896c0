//! Layered configuration: built-in defaults, then the config file, then
//! flags.

use std::path::Path;

use greenhouse_pinn::evaluation::SweepConfig;
use serde_json::Value;

use crate::error::CliError;
use crate::files::read_json;

/// Resolved configuration plus the raw file contents, which are needed to
/// tell explicitly set fields from defaults.
pub struct Layered {
    pub config: SweepConfig,
    file: Value,
}

impl Layered {
    pub fn defaults() -> Self {
        Self {
            config: SweepConfig::default(),
            file: Value::Null,
        }
    }

    /// Reads a config file (or a run manifest, whose `resolved_config` is
    /// used) and merges it over the defaults. Unknown keys are rejected.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::defaults());
        };
        let mut file: Value = read_json(path)?;
        if let Some(inner) = file.get("resolved_config") {
            file = inner.clone();
        }
        if !file.is_object() {
            return Err(CliError::usage(format!(
                "{}: config must be a JSON object",
                path.display()
            )));
        }
        let mut merged = serde_json::to_value(SweepConfig::default()).expect("default config serialises");
        merge(&mut merged, &file);
        let config: SweepConfig = serde_path_to_error::deserialize(&merged).map_err(|e| {
            CliError::usage(format!("{}: invalid {}: {}", path.display(), e.path(), e.inner()))
        })?;
        let resolved = serde_json::to_value(&config).expect("config serialises");
        if let Some(key) = unknown_key(&file, &resolved, "") {
            return Err(CliError::usage(format!(
                "{}: unknown config field `{key}`",
                path.display()
            )));
        }
        Ok(Self { config, file })
    }

    /// Whether the file set `dotted` (e.g. `training.seed`) explicitly.
    pub fn file_sets(&self, dotted: &str) -> bool {
        let mut v = &self.file;
        for part in dotted.split('.') {
            match v.get(part) {
                Some(next) => v = next,
                None => return false,
            }
        }
        true
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn unknown_key(given: &Value, resolved: &Value, prefix: &str) -> Option<String> {
    let (Value::Object(g), Value::Object(r)) = (given, resolved) else {
        return None;
    };
    for (k, v) in g {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match r.get(k) {
            None => return Some(path),
            Some(rv) => {
                if let Some(bad) = unknown_key(v, rv, &path) {
                    return Some(bad);
                }
            }
        }
    }
    None
}

/// Parses `1,2,4`.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}
