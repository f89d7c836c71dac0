use thiserror::Error;

use crate::plc::PiecewiseLogLinearDensity;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample has {distinct} distinct point(s); at least 2 are required")]
    DegenerateSample { distinct: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        /// Best feasible iterate reached before giving up.
        best: Box<PiecewiseLogLinearDensity>,
    },

    #[error("level {alpha} outside table range [{min}, {max}]")]
    OutOfRange { alpha: f64, min: f64, max: f64 },

    #[error("constant undefined for {0}: log-density has no strict curvature at the mode")]
    UndefinedConstant(String),

    #[error("unsupported distribution family: {0}")]
    UnsupportedFamily(String),

    #[error("no mode value was accepted at level {alpha}")]
    EmptyAcceptanceSet { alpha: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{failures} of {replications} replications failed (limit {limit})")]
    TooManyFailures {
        failures: usize,
        replications: usize,
        limit: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
