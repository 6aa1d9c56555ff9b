use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerical(#[from] bubbletower::Error),
    #[error("{failed} of {total} points failed")]
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for usage and configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use bubbletower::Error as E;
        match self {
            CliError::Numerical(E::Parameter(_) | E::Domain(_) | E::Unsupported(_)) => 1,
            CliError::Numerical(_) | CliError::Partial { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        use bubbletower::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::UnknownKey(_) | CliError::Config { .. } => "config",
            CliError::Validation(_) => "validation",
            CliError::Io { .. } => "io",
            CliError::Partial { .. } => "partial",
            CliError::Numerical(e) => match e {
                E::Parameter(_) => "parameter",
                E::Domain(_) => "domain",
                E::Unsupported(_) => "unsupported",
                E::Accuracy { .. } => "accuracy",
                E::Solver { .. } | E::NonContraction { .. } | E::Solvability(_) | E::Search(_) => "solver",
                _ => "numerical",
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
