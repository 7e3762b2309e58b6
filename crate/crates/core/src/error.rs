use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate date {date} in {symbol}")]
    DuplicateDate { symbol: String, date: NaiveDate },

    #[error("missing data file: {0}")]
    MissingFile(PathBuf),

    #[error("data coverage error: {0}")]
    Coverage(String),

    #[error("window starts {requested} before the first feasible date {first_feasible}")]
    Warmup {
        requested: NaiveDate,
        first_feasible: NaiveDate,
    },

    #[error("regressor matrix is singular or rank deficient (rank {rank} < {cols})")]
    Singular { rank: usize, cols: usize },

    #[error("dependent variable appears as regressor column {0}")]
    DependentInRegressors(usize),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
