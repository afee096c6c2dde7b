use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class count must be at least 2, got {0}")]
    TooFewClasses(usize),

    #[error("class index {index} outside the admissible range {lo}..={hi}")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("income spacing must be finite and positive, got {0}")]
    InvalidSpacing(f64),

    #[error("money unit must satisfy 0 < S <= delta_r, got S = {s_unit}, delta_r = {delta_r}")]
    InvalidMoneyUnit { s_unit: f64, delta_r: f64 },

    #[error("state is not on the probability simplex: {0}")]
    NotOnSimplex(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("income ladder is constant; n*R2 - R1^2 = {0}")]
    DegenerateIncomes(f64),

    #[error("degenerate distribution: x_1 + x_n = {0} leaves no interior population")]
    DegenerateDistribution(f64),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("invalid integrator setting `{key}`: {reason}")]
    InvalidSetting { key: &'static str, reason: String },

    #[error("equilibrium search did not converge after {steps} steps (residual {residual:e})")]
    NotConverged { steps: u64, residual: f64 },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the `kinex` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Verification(_)
            | Error::NotConverged { .. }
            | Error::DegenerateDistribution(_)
            | Error::DegenerateSeries(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
