use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{network} network produced a non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged {
        network: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("empty training set")]
    EmptyTrainSet,

    #[error(transparent)]
    Core(#[from] moflp_core::Error),
}
