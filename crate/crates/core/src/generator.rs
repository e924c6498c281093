//! Seeded random instances and the exhaustive Pareto oracle.
//!
//! Coordinates are uniform in the unit square; every scalar field is uniform
//! on its configured range. The reliability matrix is derived from the
//! coordinates, the timescales and the velocity model at generation time.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flp::{euclid, objectives_unchecked, optimal_assignment, pair_reliability, Instance, Solution, VelocityModel};
use crate::matrix::Matrix;
use crate::pareto::{nondominated_indices, ParetoSet};
use crate::rng::{self, Rng};

/// Largest facility count the exhaustive oracle accepts (4095 open sets).
pub const BRUTE_FORCE_MAX_M: usize = 12;

/// Closed interval `[lo, hi]` with `0 < lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo > 0.0 && self.lo <= self.hi && self.hi.is_finite()) {
            return Err(Error::Config(format!(
                "{name} range [{}, {}] must satisfy 0 < lo <= hi",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * rng.gen::<f64>()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub m: usize,
    pub n: usize,
    pub fixed_cost: Range,
    pub demand: Range,
    pub timescale: Range,
    pub unit_cost: Range,
    pub velocity: VelocityModel,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            m: 10,
            n: 25,
            fixed_cost: Range::new(50.0, 150.0),
            demand: Range::new(1.0, 10.0),
            timescale: Range::new(0.5, 1.5),
            unit_cost: Range::new(0.5, 1.5),
            velocity: VelocityModel::default(),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn with_scale(m: usize, n: usize, seed: u64) -> Self {
        GenConfig {
            m,
            n,
            seed,
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config(format!("scale {}x{} must be at least 1x1", self.m, self.n)));
        }
        self.fixed_cost.validate("fixed_cost")?;
        self.demand.validate("demand")?;
        self.timescale.validate("timescale")?;
        self.unit_cost.validate("unit_cost")?;
        self.velocity.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Generates the instance keyed by `config.seed` alone.
pub fn generate_instance(config: &GenConfig) -> Result<Instance> {
    config.validate()?;
    let id = format!("flp-{}x{}-s{}", config.m, config.n, config.seed);
    build(config, id, &mut rng::seeded(config.seed))
}

/// Generates instance number `index` of a dataset; each index owns its own
/// random stream, so batches can be produced in any order.
pub fn generate_indexed(config: &GenConfig, index: u64) -> Result<Instance> {
    config.validate()?;
    let id = format!("flp-{}x{}-s{}-{:05}", config.m, config.n, config.seed, index);
    build(config, id, &mut rng::substream(config.seed, index + 1))
}

fn build(config: &GenConfig, id: String, rng: &mut Rng) -> Result<Instance> {
    let (m, n) = (config.m, config.n);
    let point = |rng: &mut Rng| [rng.gen::<f64>(), rng.gen::<f64>()];
    let coords_facility: Vec<[f64; 2]> = (0..m).map(|_| point(rng)).collect();
    let coords_customer: Vec<[f64; 2]> = (0..n).map(|_| point(rng)).collect();
    let fixed_cost = (0..m).map(|_| config.fixed_cost.sample(rng)).collect();
    let demand = (0..n).map(|_| config.demand.sample(rng)).collect();
    let timescale: Vec<f64> = (0..n).map(|_| config.timescale.sample(rng)).collect();
    let unit_cost = Matrix::from_fn(m, n, |_, _| config.unit_cost.sample(rng));
    let distance = Matrix::from_fn(m, n, |i, j| euclid(coords_facility[i], coords_customer[j]));
    let reliability = pair_reliability(&distance, &timescale, &config.velocity)?;
    Ok(Instance {
        id,
        fixed_cost,
        demand,
        timescale,
        coords_facility,
        coords_customer,
        distance,
        unit_cost,
        reliability,
    })
}

/// Exact Pareto set by enumerating every non-empty open set.
///
/// Reliability depends only on the open bits, so for each open set the
/// cost-optimal assignment weakly dominates every other assignment. Members are
/// sorted by ascending cost; duplicate objective points keep the open set with
/// the lowest bitmask.
pub fn brute_force_pareto(instance: &Instance) -> Result<ParetoSet> {
    let m = instance.m();
    if m > BRUTE_FORCE_MAX_M {
        return Err(Error::SizeGuard {
            m,
            limit: BRUTE_FORCE_MAX_M,
        });
    }
    let mut candidates = Vec::with_capacity((1 << m) - 1);
    for mask in 1u32..(1 << m) {
        let open: Vec<bool> = (0..m).map(|i| mask & (1 << i) != 0).collect();
        let assign = optimal_assignment(instance, &open)?;
        let objectives = objectives_unchecked(instance, &open, &assign);
        candidates.push(Solution {
            open,
            assign,
            objectives: Some(objectives),
        });
    }
    let points: Vec<_> = candidates.iter().map(|s| s.objectives.unwrap()).collect();
    let mut set = ParetoSet {
        instance_id: instance.id.clone(),
        solutions: nondominated_indices(&points)
            .into_iter()
            .map(|k| candidates[k].clone())
            .collect(),
    };
    set.sort_by_cost();
    Ok(set)
}
