use std::path::PathBuf;

use thiserror::Error;

/// Which of the two coupled scales a subsystem belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Functional subsystems of active particles.
    Fs,
    /// Sub-functional subsystems of sub-active particles.
    Sfs,
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scale::Fs => write!(f, "fs"),
            Scale::Sfs => write!(f, "sfs"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("kernel {kernel}: {reason}")]
    Kernel { kernel: String, reason: String },

    #[error("kernel {kernel} is not normalized for conditioning tuple {tuple}: weighted sum = {sum}")]
    Unnormalized { kernel: String, tuple: String, sum: f64 },

    #[error("CFL violation: dt*max|v|/min(dx,dy) = {number} exceeds limit {limit}")]
    Cfl { number: f64, limit: f64 },

    #[error(
        "negative density {value:e} at step {step}, {scale} subsystem {subsystem}, cell {cell} \
         (time step too large for the gain/loss stiffness)"
    )]
    Negativity {
        step: u64,
        scale: Scale,
        subsystem: usize,
        cell: usize,
        value: f64,
    },

    #[error("non-finite value at step {step}, {scale} subsystem {subsystem}, cell {cell}")]
    NonFinite {
        step: u64,
        scale: Scale,
        subsystem: usize,
        cell: usize,
    },

    #[error("instance too large for the oracle: {states} discrete states (limit {limit})")]
    InstanceTooLarge { states: usize, limit: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("toml: {0}")]
    Toml(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn kernel(kernel: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Kernel {
            kernel: kernel.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
