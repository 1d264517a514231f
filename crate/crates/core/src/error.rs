use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("no training data")]
    EmptyData,

    #[error("gram matrix not positive definite after jitter escalation (last jitter {jitter:e})")]
    Factorization { jitter: f64 },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),

    #[error("no complete episode among {attempts} initial samples")]
    NoCompleteInitialEpisode { attempts: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed record file {path}: {msg}")]
    RecordFormat { path: PathBuf, msg: String },

    #[error("store error: {0}")]
    Store(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
