use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("forcing signal `{signal}` is not finite at t = {t} h")]
    NonFiniteForcing { signal: &'static str, t: f64 },

    #[error("integration diverged at t = {t} h")]
    Divergence { t: f64 },

    #[error("non-finite value during network evaluation ({0})")]
    Evaluation(String),

    #[error(
        "training diverged at iteration {iteration}: \
         l_data={l_data}, l_phys={l_phys}, l_ic={l_ic}, l_total={l_total}"
    )]
    TrainingDiverged {
        iteration: usize,
        l_data: f64,
        l_phys: f64,
        l_ic: f64,
        l_total: f64,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for numeric failures (divergence, non-finite values) as opposed
    /// to usage, validation or I/O problems.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteForcing { .. }
                | Error::Divergence { .. }
                | Error::Evaluation(_)
                | Error::TrainingDiverged { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Parse {
                line: e.line(),
                message: e.to_string(),
            }
        }
    }
}
