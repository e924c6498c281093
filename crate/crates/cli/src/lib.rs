//! Reproducible experiment pipeline for the facility location model:
//! instance generation, NSGA-II labelling, dataset splits, training,
//! prediction, evaluation, the NSGA-II comparison and sensitivity sweeps.

pub mod cache;
pub mod config;
pub mod error;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod svg;

pub use config::{ExperimentConfig, SweepAxis};
pub use error::{Error, Result};
pub use pipeline::{Pipeline, ScaleLayout, Step};
