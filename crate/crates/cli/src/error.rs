use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] moflp_core::Error),

    #[error(transparent)]
    Model(#[from] moflp_gcn::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error(
        "stage `{stage}` was built from a different configuration (cached {cached}, now {current}); \
         rerun with --force to rebuild it and everything downstream"
    )]
    StaleCache {
        stage: String,
        cached: String,
        current: String,
    },

    #[error("stage `{stage}` is out of date with the current configuration; run `{hint}` first")]
    StaleInput { stage: String, hint: String },

    #[error("missing {what} at {path}; run `{hint}` first")]
    MissingArtifact {
        what: String,
        path: PathBuf,
        hint: String,
    },

    #[error("artifact {path} is inconsistent: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("report error: {0}")]
    Report(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
