use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("optimizer diverged at iteration {iteration}: {message}")]
    Optimizer { iteration: usize, message: String },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Solver { .. } | Error::Optimizer { .. })
    }
}
