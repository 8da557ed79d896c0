use std::fmt;
use std::path::Path;

/// Error carrying the process exit code: 1 for numeric divergence, 2 for
/// usage and I/O problems.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let message = match e.kind() {
            std::io::ErrorKind::NotFound => format!("{}: path not found", path.display()),
            _ => format!("{}: {e}", path.display()),
        };
        Self::usage(message)
    }

    /// Prefixes the message, e.g. with the failing pipeline stage.
    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<greenhouse_pinn::Error> for CliError {
    fn from(e: greenhouse_pinn::Error) -> Self {
        Self {
            code: if e.is_numeric() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
