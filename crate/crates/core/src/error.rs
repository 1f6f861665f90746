use thiserror::Error;

use crate::graph::GraphError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not identifiable: {0}")]
    Identifiability(String),

    #[error("singular design (condition number {condition:.3e}); collinear columns: {}", columns.join(", "))]
    Singular {
        condition: f64,
        columns: Vec<String>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("feature `{0}` has no closed-form expectation; use Monte Carlo weights")]
    NoClosedForm(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure classes, used by the command-line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Identifiability,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Identifiability(_) => ErrorClass::Identifiability,
            Error::Singular { .. } | Error::Numerical(_) => ErrorClass::Numerical,
            _ => ErrorClass::Input,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
