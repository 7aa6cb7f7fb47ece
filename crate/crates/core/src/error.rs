use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A data cell could not be used. Rows and columns are 1-based, row 1 is the header.
    #[error("row {row}, column {column}: {message}")]
    Cell {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Gross return of zero: the player's wealth has been wiped out.
    #[error("bankrupt: gross return is zero")]
    Bankrupt,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("no convergence after {iterations} iterations (gap estimate {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("dimension {0} too large for exhaustive search")]
    DimensionTooLarge(usize),

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_round(self, round: usize) -> Self {
        match self {
            Error::AtRound { .. } => self,
            other => Error::AtRound {
                round,
                source: Box::new(other),
            },
        }
    }

    /// Strips round annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtRound { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Bankrupt | Error::NotPositiveDefinite | Error::NonConvergence { .. }
        )
    }
}
