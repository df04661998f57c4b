use thiserror::Error;

/// Errors raised by the numerical layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("value {value} lies outside the domain of the potential ({domain})")]
    Domain { value: f64, domain: String },

    #[error("scalar resolvent did not converge for r = {r}, eps = {eps} after {iterations} iterations")]
    Convergence { r: f64, eps: f64, iterations: usize },

    #[error("invalid parameters: {0}")]
    Param(String),

    #[error("domain volume {volume} is not below the admissible threshold {threshold}")]
    Volume { volume: f64, threshold: f64 },

    #[error("linear solve failed: relative residual {residual:.3e} after {iterations} iterations")]
    Solve { residual: f64, iterations: usize },

    #[error("right-hand side has mean {mean:.3e}, exceeding tolerance {tolerance:.3e}")]
    Mean { mean: f64, tolerance: f64 },

    #[error("index {requested} out of range (at most {available})")]
    Range { requested: usize, available: usize },

    #[error("Newton iteration failed at t = {t}: residual {residual:.3e} after {iterations} iterations")]
    Newton { t: f64, residual: f64, iterations: usize },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("operation not available in this boundary regime: {0}")]
    Regime(String),

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("malformed snapshot file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
