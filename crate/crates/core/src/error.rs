use thiserror::Error;

/// Errors raised by the numerical pipeline.
///
/// The variants map onto the command-line exit codes: configuration and
/// validation problems are the caller's fault, numerical failures are not.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("degenerate triangle {index} (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:e})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
        best_eigenvalues: Vec<f64>,
        best_residuals: Vec<f64>,
    },
    #[error("insufficient spectrum: largest computed eigenvalue {largest} does not pass {needed}; increase count")]
    InsufficientSpectrum { largest: f64, needed: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Validation(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
