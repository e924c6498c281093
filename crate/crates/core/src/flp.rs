//! Problem model for the bi-objective uncapacitated facility location problem.
//!
//! A solution opens a subset of `m` candidate facilities and assigns each of
//! the `n` customers to exactly one open facility. Two objectives are scored:
//!
//! * total cost `C = sum_i f_i X_i + sum_i sum_j q_j d_ij c_ij Y_ij` (minimised)
//! * system reliability `R = sum_i sum_j q_j X_i R_ij / sum_j q_j` (maximised)
//!
//! The reliability sum is gated by the open bits only, so it can exceed 1 when
//! several facilities are open. [`ReliabilityMode::AssignmentGated`] offers the
//! bounded alternative that only counts the serving facility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::matrix::Matrix;

/// Normal velocity model shared by every facility/customer pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel {
    pub mean: f64,
    pub std_dev: f64,
}

impl Default for VelocityModel {
    fn default() -> Self {
        VelocityModel {
            mean: 1.0,
            std_dev: 0.3,
        }
    }
}

impl VelocityModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0 && self.mean.is_finite()) {
            return Err(Error::Domain(format!("velocity mean must be positive, got {}", self.mean)));
        }
        if !(self.std_dev > 0.0 && self.std_dev.is_finite()) {
            return Err(Error::Domain(format!(
                "velocity deviation must be positive, got {}",
                self.std_dev
            )));
        }
        Ok(())
    }

    /// Probability that a delivery over `distance` arrives within `timescale`.
    pub fn on_time_probability(&self, distance: f64, timescale: f64) -> f64 {
        let z = (distance / timescale - self.mean) / self.std_dev;
        (1.0 - standard_normal_cdf(z)).clamp(0.0, 1.0)
    }
}

/// Standard normal CDF.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Which reliability aggregation to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityMode {
    /// `sum_i sum_j q_j X_i R_ij / sum_j q_j`, gated by the open bits.
    #[default]
    OpenGated,
    /// `sum_j q_j R_{a(j) j} / sum_j q_j`, only the serving facility counts.
    AssignmentGated,
}

/// One problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub fixed_cost: Vec<f64>,
    pub demand: Vec<f64>,
    pub timescale: Vec<f64>,
    pub coords_facility: Vec<[f64; 2]>,
    pub coords_customer: Vec<[f64; 2]>,
    pub distance: Matrix,
    pub unit_cost: Matrix,
    pub reliability: Matrix,
}

impl Instance {
    /// Number of candidate facilities.
    pub fn m(&self) -> usize {
        self.fixed_cost.len()
    }

    /// Number of customers.
    pub fn n(&self) -> usize {
        self.demand.len()
    }

    /// Transport cost of serving customer `j` from facility `i`.
    #[inline]
    pub fn service_cost(&self, i: usize, j: usize) -> f64 {
        self.demand[j] * self.distance.get(i, j) * self.unit_cost.get(i, j)
    }

    /// Checks every structural and numeric invariant.
    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.m(), self.n());
        if m == 0 {
            return Err(Error::validation("fixed_cost", "at least one facility required"));
        }
        if n == 0 {
            return Err(Error::validation("demand", "at least one customer required"));
        }
        let positive = |field: &str, v: &[f64]| -> Result<()> {
            match v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                Some(k) => Err(Error::validation(field, format!("entry {k} = {} is not positive", v[k]))),
                None => Ok(()),
            }
        };
        positive("fixed_cost", &self.fixed_cost)?;
        positive("demand", &self.demand)?;
        if self.timescale.len() != n {
            return Err(Error::validation("timescale", format!("expected {n} entries")));
        }
        positive("timescale", &self.timescale)?;
        if self.coords_facility.len() != m {
            return Err(Error::validation("coords_facility", format!("expected {m} points")));
        }
        if self.coords_customer.len() != n {
            return Err(Error::validation("coords_customer", format!("expected {n} points")));
        }
        for (name, mat) in [
            ("distance", &self.distance),
            ("unit_cost", &self.unit_cost),
            ("reliability", &self.reliability),
        ] {
            if mat.rows() != m || mat.cols() != n {
                return Err(Error::validation(
                    name,
                    format!("expected {m}x{n}, found {}x{}", mat.rows(), mat.cols()),
                ));
            }
        }
        if let Some(k) = self.unit_cost.as_slice().iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::validation("unit_cost", format!("entry {k} is negative or not finite")));
        }
        if let Some(k) = self
            .reliability
            .as_slice()
            .iter()
            .position(|x| !(0.0..=1.0).contains(x))
        {
            return Err(Error::validation(
                "reliability",
                format!("entry ({}, {}) = {} outside [0, 1]", k / n, k % n, self.reliability.as_slice()[k]),
            ));
        }
        for i in 0..m {
            for j in 0..n {
                let d = self.distance.get(i, j);
                let e = euclid(self.coords_facility[i], self.coords_customer[j]);
                if d.is_nan() || d < 0.0 || (d - e).abs() > 1e-9 {
                    return Err(Error::validation(
                        "distance",
                        format!("entry ({i}, {j}) = {d} disagrees with coordinates ({e})"),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Objective values of a solution: cost (minimised) and reliability (maximised).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub f1: f64,
    pub f2: f64,
}

impl ObjectivePoint {
    pub fn new(f1: f64, f2: f64) -> Self {
        ObjectivePoint { f1, f2 }
    }

    /// `self` is no worse in both objectives and strictly better in one.
    pub fn dominates(&self, other: &ObjectivePoint) -> bool {
        dominates(self, other)
    }
}

/// Pareto dominance with cost minimised and reliability maximised.
pub fn dominates(a: &ObjectivePoint, b: &ObjectivePoint) -> bool {
    a.f1 <= b.f1 && a.f2 >= b.f2 && (a.f1 < b.f1 || a.f2 > b.f2)
}

/// A candidate solution: open bits `X` and the assignment encoding `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub open: Vec<bool>,
    /// `assign[j] = i` iff customer `j` is served by facility `i`.
    pub assign: Vec<usize>,
    pub objectives: Option<ObjectivePoint>,
}

impl Solution {
    pub fn new(open: Vec<bool>, assign: Vec<usize>) -> Self {
        Solution {
            open,
            assign,
            objectives: None,
        }
    }

    /// Builds a solution and evaluates it.
    pub fn evaluated(instance: &Instance, open: Vec<bool>, assign: Vec<usize>) -> Result<Self> {
        let mut s = Solution::new(open, assign);
        s.evaluate(instance)?;
        Ok(s)
    }

    /// Evaluates both objectives and caches them.
    pub fn evaluate(&mut self, instance: &Instance) -> Result<ObjectivePoint> {
        let p = evaluate(instance, self)?;
        self.objectives = Some(p);
        Ok(p)
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&b| b).count()
    }
}

/// Reports every violated constraint; `Ok(())` when feasible.
pub fn check_feasible(instance: &Instance, solution: &Solution) -> Result<()> {
    check_shape(instance, solution)?;
    let mut violations = Vec::new();
    if !solution.open.iter().any(|&b| b) {
        violations.push(Violation::NoFacilityOpen);
    }
    for (j, &i) in solution.assign.iter().enumerate() {
        if i >= instance.m() {
            violations.push(Violation::FacilityOutOfRange { customer: j, facility: i });
        } else if !solution.open[i] {
            violations.push(Violation::AssignedToClosed { customer: j, facility: i });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Infeasible(violations))
    }
}

fn check_shape(instance: &Instance, solution: &Solution) -> Result<()> {
    if solution.open.len() != instance.m() || solution.assign.len() != instance.n() {
        return Err(Error::Shape(format!(
            "solution has {} open bits and {} assignments, instance is {}x{}",
            solution.open.len(),
            solution.assign.len(),
            instance.m(),
            instance.n()
        )));
    }
    Ok(())
}

/// Total cost: fixed costs of open facilities plus demand-weighted transport.
pub fn eval_total_cost(instance: &Instance, solution: &Solution) -> Result<f64> {
    check_feasible(instance, solution)?;
    Ok(total_cost_unchecked(instance, &solution.open, &solution.assign))
}

/// System reliability, gated by open bits.
pub fn eval_reliability(instance: &Instance, solution: &Solution) -> Result<f64> {
    eval_reliability_with(instance, solution, ReliabilityMode::OpenGated)
}

pub fn eval_reliability_with(
    instance: &Instance,
    solution: &Solution,
    mode: ReliabilityMode,
) -> Result<f64> {
    check_feasible(instance, solution)?;
    Ok(match mode {
        ReliabilityMode::OpenGated => reliability_unchecked(instance, &solution.open),
        ReliabilityMode::AssignmentGated => assignment_gated_reliability(instance, &solution.assign),
    })
}

/// Both objectives under the default reliability mode.
pub fn evaluate(instance: &Instance, solution: &Solution) -> Result<ObjectivePoint> {
    evaluate_with(instance, solution, ReliabilityMode::OpenGated)
}

pub fn evaluate_with(
    instance: &Instance,
    solution: &Solution,
    mode: ReliabilityMode,
) -> Result<ObjectivePoint> {
    let f2 = eval_reliability_with(instance, solution, mode)?;
    Ok(ObjectivePoint::new(
        total_cost_unchecked(instance, &solution.open, &solution.assign),
        f2,
    ))
}

pub(crate) fn total_cost_unchecked(instance: &Instance, open: &[bool], assign: &[usize]) -> f64 {
    let fixed: f64 = open
        .iter()
        .zip(&instance.fixed_cost)
        .filter(|(o, _)| **o)
        .map(|(_, f)| f)
        .sum();
    let transport: f64 = assign
        .iter()
        .enumerate()
        .map(|(j, &i)| instance.service_cost(i, j))
        .sum();
    fixed + transport
}

pub(crate) fn reliability_unchecked(instance: &Instance, open: &[bool]) -> f64 {
    let total_demand: f64 = instance.demand.iter().sum();
    let mut acc = 0.0;
    for (i, _) in open.iter().enumerate().filter(|(_, o)| **o) {
        for (j, q) in instance.demand.iter().enumerate() {
            acc += q * instance.reliability.get(i, j);
        }
    }
    acc / total_demand
}

fn assignment_gated_reliability(instance: &Instance, assign: &[usize]) -> f64 {
    let total_demand: f64 = instance.demand.iter().sum();
    let acc: f64 = assign
        .iter()
        .enumerate()
        .map(|(j, &i)| instance.demand[j] * instance.reliability.get(i, j))
        .sum();
    acc / total_demand
}

/// Objectives of an already-feasible genome, skipping the feasibility scan.
pub(crate) fn objectives_unchecked(instance: &Instance, open: &[bool], assign: &[usize]) -> ObjectivePoint {
    ObjectivePoint::new(
        total_cost_unchecked(instance, open, assign),
        reliability_unchecked(instance, open),
    )
}

/// Per-pair on-time probabilities `R_ij = 1 - Phi((d_ij / t_j - mean) / std)`.
pub fn pair_reliability(distance: &Matrix, timescale: &[f64], model: &VelocityModel) -> Result<Matrix> {
    model.validate()?;
    if timescale.len() != distance.cols() {
        return Err(Error::Shape(format!(
            "{} timescales for {} customers",
            timescale.len(),
            distance.cols()
        )));
    }
    if let Some(j) = timescale.iter().position(|t| t.is_nan() || *t <= 0.0) {
        return Err(Error::Domain(format!("timescale {j} = {} is not positive", timescale[j])));
    }
    if distance.as_slice().iter().any(|d| d.is_nan() || *d < 0.0) {
        return Err(Error::Domain("distances must be non-negative".into()));
    }
    Ok(Matrix::from_fn(distance.rows(), distance.cols(), |i, j| {
        model.on_time_probability(distance.get(i, j), timescale[j])
    }))
}

/// Cheapest open facility for every customer; ties go to the lowest index.
pub fn optimal_assignment(instance: &Instance, open: &[bool]) -> Result<Vec<usize>> {
    if open.len() != instance.m() {
        return Err(Error::Shape(format!(
            "{} open bits for {} facilities",
            open.len(),
            instance.m()
        )));
    }
    if !open.iter().any(|&b| b) {
        return Err(Error::Domain("optimal assignment needs at least one open facility".into()));
    }
    Ok((0..instance.n()).map(|j| cheapest_open(instance, open, j)).collect())
}

pub(crate) fn cheapest_open(instance: &Instance, open: &[bool], j: usize) -> usize {
    let mut best = usize::MAX;
    let mut best_cost = f64::INFINITY;
    for (i, _) in open.iter().enumerate().filter(|(_, o)| **o) {
        let c = instance.service_cost(i, j);
        if best == usize::MAX || c < best_cost {
            best = i;
            best_cost = c;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two facilities, two customers, hand-checkable numbers.
    pub fn t1() -> Instance {
        let coords_facility = vec![[0.0, 0.0], [3.0, 0.0]];
        let coords_customer = vec![[1.0, 0.0], [2.0, 0.0]];
        Instance {
            id: "T1".into(),
            fixed_cost: vec![10.0, 20.0],
            demand: vec![1.0, 2.0],
            timescale: vec![1.0, 1.0],
            distance: Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap(),
            unit_cost: Matrix::filled(2, 2, 1.0),
            reliability: Matrix::from_rows(&[vec![0.9, 0.5], vec![0.6, 0.8]]).unwrap(),
            coords_facility,
            coords_customer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::t1;
    use super::*;
    use proptest::prelude::*;

    fn sol(open: &[u8], assign: &[usize]) -> Solution {
        Solution::new(open.iter().map(|&b| b == 1).collect(), assign.to_vec())
    }

    #[test]
    fn t1_is_valid() {
        t1().validate().unwrap();
    }

    #[test]
    fn total_cost_hand_values() {
        let inst = t1();
        assert_eq!(eval_total_cost(&inst, &sol(&[1, 0], &[0, 0])).unwrap(), 15.0);
        assert_eq!(eval_total_cost(&inst, &sol(&[1, 1], &[0, 1])).unwrap(), 33.0);
    }

    #[test]
    fn total_cost_zero_demand_is_fixed_sum() {
        let mut inst = t1();
        inst.demand = vec![0.0, 0.0];
        let c = total_cost_unchecked(&inst, &[true, true], &[0, 1]);
        assert_eq!(c, 30.0);
    }

    #[test]
    fn reliability_hand_values() {
        let inst = t1();
        let r = eval_reliability(&inst, &sol(&[1, 0], &[0, 0])).unwrap();
        assert!((r - 1.9 / 3.0).abs() < 1e-12);
        let r = eval_reliability(&inst, &sol(&[1, 1], &[0, 1])).unwrap();
        assert!((r - 4.1 / 3.0).abs() < 1e-12);
        assert!(r > 1.0);
    }

    #[test]
    fn reliability_zero_matrix() {
        let mut inst = t1();
        inst.reliability = Matrix::zeros(2, 2);
        assert_eq!(eval_reliability(&inst, &sol(&[1, 1], &[0, 1])).unwrap(), 0.0);
    }

    #[test]
    fn assignment_gated_mode_is_bounded() {
        let inst = t1();
        let r = eval_reliability_with(&inst, &sol(&[1, 1], &[0, 1]), ReliabilityMode::AssignmentGated)
            .unwrap();
        assert!((r - (0.9 + 2.0 * 0.8) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn evaluation_rejects_infeasible() {
        let inst = t1();
        assert!(matches!(
            eval_total_cost(&inst, &sol(&[1, 0], &[0, 1])),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            eval_reliability(&inst, &sol(&[0, 0], &[0, 1])),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn feasibility_reports() {
        let inst = t1();
        check_feasible(&inst, &sol(&[1, 0], &[0, 0])).unwrap();
        match check_feasible(&inst, &sol(&[1, 0], &[0, 1])) {
            Err(Error::Infeasible(v)) => {
                assert_eq!(v, vec![Violation::AssignedToClosed { customer: 1, facility: 1 }])
            }
            other => panic!("unexpected {other:?}"),
        }
        match check_feasible(&inst, &sol(&[0, 0], &[0, 1])) {
            Err(Error::Infeasible(v)) => assert!(v.contains(&Violation::NoFacilityOpen)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            check_feasible(&inst, &sol(&[1], &[0, 0])),
            Err(Error::Shape(_))
        ));
        match check_feasible(&inst, &sol(&[1, 1], &[0, 5])) {
            Err(Error::Infeasible(v)) => {
                assert_eq!(v, vec![Violation::FacilityOutOfRange { customer: 1, facility: 5 }])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dominance_examples() {
        let p = ObjectivePoint::new;
        assert!(dominates(&p(10.0, 0.9), &p(12.0, 0.8)));
        assert!(!dominates(&p(10.0, 0.9), &p(10.0, 0.9)));
        assert!(!dominates(&p(10.0, 0.7), &p(12.0, 0.8)));
        assert!(!dominates(&p(12.0, 0.8), &p(10.0, 0.7)));
    }

    #[test]
    fn pair_reliability_reference_values() {
        let model = VelocityModel { mean: 1.0, std_dev: 0.3 };
        let d = Matrix::from_rows(&[vec![1.0, 0.0, 1.3]]).unwrap();
        let r = pair_reliability(&d, &[1.0, 1.0, 1.0], &model).unwrap();
        assert!((r.get(0, 0) - 0.5).abs() < 1e-15);
        // mean / std = 1 / 0.3 is not 3; use an exact ratio model for Phi(3)
        let model3 = VelocityModel { mean: 0.9, std_dev: 0.3 };
        let r3 = pair_reliability(&Matrix::zeros(1, 1), &[1.0], &model3).unwrap();
        assert!((r3.get(0, 0) - 0.998_650_101_968_369_9).abs() < 1e-12);
        assert!((r.get(0, 2) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn pair_reliability_rejects_bad_timescale() {
        let d = Matrix::zeros(1, 2);
        let m = VelocityModel::default();
        assert!(matches!(pair_reliability(&d, &[1.0, 0.0], &m), Err(Error::Domain(_))));
        assert!(matches!(pair_reliability(&d, &[1.0], &m), Err(Error::Shape(_))));
    }

    #[test]
    fn optimal_assignment_examples() {
        let inst = t1();
        assert_eq!(optimal_assignment(&inst, &[true, true]).unwrap(), vec![0, 1]);
        assert_eq!(optimal_assignment(&inst, &[true, false]).unwrap(), vec![0, 0]);
        assert!(matches!(optimal_assignment(&inst, &[false, false]), Err(Error::Domain(_))));
    }

    #[test]
    fn optimal_assignment_tie_goes_to_lowest_index() {
        let mut inst = t1();
        inst.fixed_cost = vec![1.0, 1.0, 1.0];
        inst.coords_facility = vec![[0.0, 0.0], [5.0, 0.0], [0.0, 0.0]];
        inst.distance = Matrix::from_rows(&[vec![1.0, 2.0], vec![4.0, 3.0], vec![1.0, 2.0]]).unwrap();
        inst.unit_cost = Matrix::filled(3, 2, 1.0);
        inst.reliability = Matrix::filled(3, 2, 0.5);
        assert_eq!(optimal_assignment(&inst, &[true, true, true]).unwrap(), vec![0, 0]);
        assert_eq!(optimal_assignment(&inst, &[false, true, true]).unwrap(), vec![2, 2]);
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        (1usize..5, 1usize..6).prop_flat_map(|(m, n)| {
            (
                prop::collection::vec(1.0f64..100.0, m),
                prop::collection::vec(0.1f64..10.0, n),
                prop::collection::vec(0.0f64..5.0, m * n),
                prop::collection::vec(0.0f64..=1.0, m * n),
                prop::collection::vec(prop::array::uniform2(0.0f64..1.0), m),
                prop::collection::vec(prop::array::uniform2(0.0f64..1.0), n),
            )
                .prop_map(move |(f, q, c, r, cf, cc)| {
                    let distance = Matrix::from_fn(m, n, |i, j| euclid(cf[i], cc[j]));
                    Instance {
                        id: "prop".into(),
                        fixed_cost: f,
                        demand: q,
                        timescale: vec![1.0; n],
                        coords_facility: cf,
                        coords_customer: cc,
                        distance,
                        unit_cost: Matrix::from_fn(m, n, |i, j| c[i * n + j]),
                        reliability: Matrix::from_fn(m, n, |i, j| r[i * n + j]),
                    }
                })
        })
    }

    fn arb_point() -> impl Strategy<Value = ObjectivePoint> {
        (0u8..6, 0u8..6).prop_map(|(a, b)| ObjectivePoint::new(a as f64, b as f64 / 5.0))
    }

    proptest! {
        #[test]
        fn dominance_is_strict_partial_order(a in arb_point(), b in arb_point(), c in arb_point()) {
            prop_assert!(!dominates(&a, &a));
            prop_assert!(!(dominates(&a, &b) && dominates(&b, &a)));
            if dominates(&a, &b) && dominates(&b, &c) {
                prop_assert!(dominates(&a, &c));
            }
        }

        #[test]
        fn optimal_assignment_is_cheapest(
            inst in arb_instance(),
            bits in prop::collection::vec(any::<bool>(), 5),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 6),
        ) {
            let m = inst.m();
            let mut open: Vec<bool> = bits[..m].to_vec();
            if !open.iter().any(|&b| b) { open[0] = true; }
            let opened: Vec<usize> = (0..m).filter(|&i| open[i]).collect();
            let best = Solution::new(open.clone(), optimal_assignment(&inst, &open).unwrap());
            let other = Solution::new(
                open.clone(),
                (0..inst.n()).map(|j| opened[picks[j].index(opened.len())]).collect(),
            );
            let cb = eval_total_cost(&inst, &best).unwrap();
            let co = eval_total_cost(&inst, &other).unwrap();
            prop_assert!(cb <= co);
            // reliability ignores the assignment
            prop_assert_eq!(eval_reliability(&inst, &best).unwrap(), eval_reliability(&inst, &other).unwrap());
            // purity
            prop_assert_eq!(eval_total_cost(&inst, &best).unwrap().to_bits(), cb.to_bits());
            // cost bounded below by the cheapest fixed cost
            let fmin = inst.fixed_cost.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(cb >= fmin);
        }

        #[test]
        fn pair_reliability_monotone(d1 in 0.0f64..3.0, dd in 0.0f64..3.0, t1 in 0.1f64..3.0, dt in 0.0f64..3.0) {
            let model = VelocityModel::default();
            let r = |d: f64, t: f64| model.on_time_probability(d, t);
            prop_assert!(r(d1 + dd, t1) <= r(d1, t1));
            prop_assert!(r(d1, t1 + dt) >= r(d1, t1));
            prop_assert!((0.0..=1.0).contains(&r(d1, t1)));
        }
    }
}
