//! One-shot decoding of predicted marginals into feasible solutions.
//!
//! Each draw opens facilities independently with their predicted
//! probabilities, then assigns every customer by sampling its predicted
//! column restricted to the open facilities.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flp::{objectives_unchecked, Instance, Solution};
use crate::matrix::Matrix;
use crate::pareto::{nondominated_filter, ParetoSet};
use crate::rng::{self, Rng};

/// Restricted column mass below which a customer is assigned uniformly.
pub const MIN_RESTRICTED_MASS: f64 = 1e-12;

/// Predicted marginals for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Probability that each facility is opened.
    pub p_node: Vec<f64>,
    /// Column-stochastic `m x n` assignment probabilities.
    pub p_edge: Matrix,
}

impl Prediction {
    pub fn validate(&self) -> Result<()> {
        let m = self.p_node.len();
        if self.p_edge.rows() != m {
            return Err(Error::Shape(format!("p_edge has {} rows for {m} facilities", self.p_edge.rows())));
        }
        if self.p_node.iter().chain(self.p_edge.as_slice()).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("probabilities must lie in [0, 1]".into()));
        }
        for j in 0..self.p_edge.cols() {
            let s = self.p_edge.column_sum(j);
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("p_edge column {j} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// How a draw that opens nothing is rescued.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyOpenFallback {
    /// Open the facility with the highest predicted probability.
    #[default]
    ArgmaxNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub fallback: EmptyOpenFallback,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            sample_count: 200,
            seed: 0,
            fallback: EmptyOpenFallback::ArgmaxNode,
        }
    }
}

/// Draws `config.sample_count` feasible, evaluated solutions.
///
/// Sample `k` uses its own substream of `config.seed`.
pub fn co_sample(prediction: &Prediction, instance: &Instance, config: &SampleConfig) -> Result<Vec<Solution>> {
    let (m, n) = (instance.m(), instance.n());
    if prediction.p_node.len() != m || prediction.p_edge.rows() != m || prediction.p_edge.cols() != n {
        return Err(Error::Shape(format!(
            "prediction is {}x{} ({} node probabilities), instance is {m}x{n}",
            prediction.p_edge.rows(),
            prediction.p_edge.cols(),
            prediction.p_node.len()
        )));
    }
    if config.sample_count == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    Ok((0..config.sample_count as u64)
        .map(|k| draw(prediction, instance, &mut rng::substream(config.seed, k)))
        .collect())
}

fn draw(prediction: &Prediction, instance: &Instance, rng: &mut Rng) -> Solution {
    let m = instance.m();
    let mut open: Vec<bool> = prediction.p_node.iter().map(|&p| rng.gen::<f64>() < p).collect();
    if !open.iter().any(|&b| b) {
        open[argmax(&prediction.p_node)] = true;
    }
    let opened: Vec<usize> = (0..m).filter(|&i| open[i]).collect();
    let assign: Vec<usize> = (0..instance.n())
        .map(|j| {
            let mass: f64 = opened.iter().map(|&i| prediction.p_edge.get(i, j)).sum();
            if mass < MIN_RESTRICTED_MASS {
                return opened[rng.gen_range(0..opened.len())];
            }
            let mut u = rng.gen::<f64>() * mass;
            for &i in &opened {
                let p = prediction.p_edge.get(i, j);
                if u < p {
                    return i;
                }
                u -= p;
            }
            // rounding left u at the top of the range: take the last facility with mass
            *opened
                .iter()
                .rev()
                .find(|&&i| prediction.p_edge.get(i, j) > 0.0)
                .expect("positive restricted mass")
        })
        .collect();
    let objectives = objectives_unchecked(instance, &open, &assign);
    Solution {
        open,
        assign,
        objectives: Some(objectives),
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Samples and keeps the non-dominated subset.
pub fn sample_front(prediction: &Prediction, instance: &Instance, config: &SampleConfig) -> Result<ParetoSet> {
    let samples = co_sample(prediction, instance, config)?;
    let mut set = nondominated_filter(&instance.id, &samples)?;
    set.sort_by_cost();
    Ok(set)
}
