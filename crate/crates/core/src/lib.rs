//! Multi-objective uncapacitated facility location (MO-FLP).
//!
//! The crate covers the non-neural half of the pipeline: the problem model and
//! its two objectives, random instance generation with an exhaustive Pareto
//! oracle for small instances, an NSGA-II engine, hypervolume/IGD indicators,
//! label and feature extraction for the graph model, and the sampler that
//! decodes predicted marginals into feasible solutions.

pub mod dataset;
pub mod error;
pub mod flp;
pub mod generator;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod moea;
pub mod pareto;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result, Violation};
pub use flp::{Instance, ObjectivePoint, ReliabilityMode, Solution, VelocityModel};
pub use matrix::Matrix;
pub use pareto::ParetoSet;
