//! Dual residual gated graph convolutional model for facility location.
//!
//! Two independent networks read the same bipartite graph: one predicts the
//! probability that each facility is opened, the other a per-customer
//! distribution over serving facilities. Everything underneath, from the dense
//! kernels to the backward passes and Adam, lives in [`tensor`] and [`nn`].

pub mod checkpoint;
pub mod error;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{HeadKind, ModelConfig, Network};
pub use tensor::Tensor2;
pub use train::{train, train_with_progress, EpochRecord, TrainConfig, TrainOutcome};
