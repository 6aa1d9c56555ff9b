use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("point outside the domain: {0}")]
    Domain(String),
    #[error("singular evaluation: {0}")]
    Singularity(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("accuracy target {requested:e} not reached (estimated error {achieved:e})")]
    Accuracy { requested: f64, achieved: f64 },
    #[error("minimum search failed: {0}")]
    Search(String),
    #[error("no solution bracketed: {0}")]
    Solvability(String),
    #[error("solver failed: {message}")]
    Solver { message: String, trace: Vec<f64> },
    #[error("grid under-resolves the problem: {0}")]
    Resolution(String),
    #[error("fixed-point map is not contracting (update ratio {ratio:.3})")]
    NonContraction { ratio: f64 },
    #[error("unexpected solution structure: {0}")]
    Structure(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>, trace: Vec<f64>) -> Self {
        Error::Solver { message: msg.into(), trace }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
