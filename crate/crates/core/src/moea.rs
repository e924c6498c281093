//! NSGA-II over the facility location genome.
//!
//! The genome is the pair (open bits, assignment vector). Variation is uniform
//! crossover and per-gene mutation followed by a repair step that keeps every
//! individual feasible: an empty open set re-opens the facility with the lowest
//! fixed cost, and customers pointing at a closed facility move to the
//! cheapest open one.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flp::{cheapest_open, dominates, objectives_unchecked, Instance, ObjectivePoint, Solution};
use crate::metrics::{hypervolume_2d, to_min_space, MinPoint};
use crate::pareto::{nondominated_filter, ParetoSet};
use crate::rng::{self, Rng};

/// Early stop once the rank-0 hypervolume gains less than `tolerance`
/// (relative) over `generations` consecutive generations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StallRule {
    pub generations: usize,
    pub tolerance: f64,
}

impl Default for StallRule {
    fn default() -> Self {
        StallRule {
            generations: 50,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoeaParams {
    pub population_size: usize,
    pub max_evaluations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1 / (m + n)`.
    pub mutation_rate: Option<f64>,
    pub seed: u64,
    pub checkpoint_budgets: Vec<usize>,
    pub stall: Option<StallRule>,
    /// Probability that an offspring's assignment is replaced by the
    /// cost-optimal assignment for its open set.
    pub assignment_polish: f64,
}

impl Default for MoeaParams {
    fn default() -> Self {
        MoeaParams {
            population_size: 100,
            max_evaluations: 2000,
            crossover_rate: 0.9,
            mutation_rate: None,
            seed: 0,
            checkpoint_budgets: Vec::new(),
            stall: None,
            assignment_polish: 0.3,
        }
    }
}

impl MoeaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "population size {} must be even and at least 4",
                self.population_size
            )));
        }
        if self.max_evaluations < self.population_size {
            return Err(Error::Config(format!(
                "max_evaluations {} is below the population size {}",
                self.max_evaluations, self.population_size
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config(format!("crossover rate {} outside [0, 1]", self.crossover_rate)));
        }
        if let Some(r) = self.mutation_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("mutation rate {r} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.assignment_polish) {
            return Err(Error::Config(format!(
                "assignment polish probability {} outside [0, 1]",
                self.assignment_polish
            )));
        }
        if self.checkpoint_budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("checkpoint budgets must be strictly increasing".into()));
        }
        if let Some(&b) = self
            .checkpoint_budgets
            .iter()
            .find(|&&b| b > self.max_evaluations || b < self.population_size)
        {
            return Err(Error::Config(format!(
                "checkpoint budget {b} outside [{}, {}]",
                self.population_size, self.max_evaluations
            )));
        }
        Ok(())
    }

    pub fn effective_mutation_rate(&self, instance: &Instance) -> f64 {
        self.mutation_rate
            .unwrap_or(1.0 / (instance.m() + instance.n()) as f64)
    }
}

/// Non-dominated fronts of `points` (cost minimised, reliability maximised).
pub fn fast_nondominated_sort(points: &[ObjectivePoint]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates(&points[p], &points[q]) {
                dominated_by[p].push(q);
                domination_count[q] += 1;
            } else if dominates(&points[q], &points[p]) {
                dominated_by[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&p| domination_count[p] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front.
pub fn crowding_distance(front: &[ObjectivePoint]) -> Vec<f64> {
    let n = front.len();
    let mut distance = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let objective = |p: &ObjectivePoint, k: usize| if k == 0 { p.f1 } else { p.f2 };
    for k in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objective(&front[a], k).total_cmp(&objective(&front[b], k)));
        let lo = objective(&front[order[0]], k);
        let hi = objective(&front[order[n - 1]], k);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = objective(&front[order[w + 1]], k) - objective(&front[order[w - 1]], k);
            distance[order[w]] += gap / range;
        }
    }
    distance
}

/// Population annotated with front index and crowding distance.
#[derive(Debug, Clone)]
pub struct RankedPopulation {
    pub individuals: Vec<Solution>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
}

impl RankedPopulation {
    pub fn new(individuals: Vec<Solution>) -> Self {
        let points = objective_points(&individuals);
        let mut rank = vec![0; individuals.len()];
        let mut crowding = vec![0.0; individuals.len()];
        for (r, front) in fast_nondominated_sort(&points).iter().enumerate() {
            let members: Vec<_> = front.iter().map(|&k| points[k]).collect();
            for (&k, d) in front.iter().zip(crowding_distance(&members)) {
                rank[k] = r;
                crowding[k] = d;
            }
        }
        RankedPopulation {
            individuals,
            rank,
            crowding,
        }
    }

    /// Crowded comparison: lower rank wins, then larger crowding distance.
    fn better(&self, a: usize, b: usize) -> usize {
        if self.rank[a] != self.rank[b] {
            if self.rank[a] < self.rank[b] {
                a
            } else {
                b
            }
        } else if self.crowding[b] > self.crowding[a] {
            b
        } else {
            a
        }
    }

    fn front_zero(&self) -> Vec<Solution> {
        self.individuals
            .iter()
            .zip(&self.rank)
            .filter(|(_, &r)| r == 0)
            .map(|(s, _)| s.clone())
            .collect()
    }
}

fn objective_points(solutions: &[Solution]) -> Vec<ObjectivePoint> {
    solutions
        .iter()
        .map(|s| s.objectives.expect("population members are evaluated"))
        .collect()
}

/// Uniform non-empty open set, uniform assignment among the open facilities.
pub fn random_solution(instance: &Instance, rng: &mut Rng) -> Solution {
    let m = instance.m();
    let open = loop {
        let bits: Vec<bool> = (0..m).map(|_| rng.gen::<bool>()).collect();
        if bits.iter().any(|&b| b) {
            break bits;
        }
    };
    let opened: Vec<usize> = (0..m).filter(|&i| open[i]).collect();
    let assign: Vec<usize> = (0..instance.n())
        .map(|_| opened[rng.gen_range(0..opened.len())])
        .collect();
    let objectives = objectives_unchecked(instance, &open, &assign);
    Solution {
        open,
        assign,
        objectives: Some(objectives),
    }
}

/// `count` independent random feasible solutions drawn from `seed`.
pub fn random_solutions(instance: &Instance, count: usize, seed: u64) -> Vec<Solution> {
    let mut rng = rng::seeded(seed);
    (0..count).map(|_| random_solution(instance, &mut rng)).collect()
}

/// Initial population of `params.population_size` evaluated random solutions.
pub fn init_population(instance: &Instance, params: &MoeaParams) -> Vec<Solution> {
    random_solutions(instance, params.population_size, params.seed)
}

/// Makes a genome feasible in place.
pub fn repair(instance: &Instance, open: &mut [bool], assign: &mut [usize]) {
    if !open.iter().any(|&b| b) {
        let cheapest = (0..instance.m())
            .min_by(|&a, &b| instance.fixed_cost[a].total_cmp(&instance.fixed_cost[b]))
            .expect("instance has facilities");
        open[cheapest] = true;
    }
    for (j, a) in assign.iter_mut().enumerate() {
        if !open[*a] {
            *a = cheapest_open(instance, open, j);
        }
    }
}

/// Uniform crossover with explicit masks: where a mask bit is set, the
/// children swap that gene. Children are repaired and left unevaluated.
pub fn crossover_with_masks(
    instance: &Instance,
    a: &Solution,
    b: &Solution,
    open_mask: &[bool],
    assign_mask: &[bool],
) -> (Solution, Solution) {
    let mut ca = a.clone();
    let mut cb = b.clone();
    let mut changed = false;
    for (i, &swap) in open_mask.iter().enumerate() {
        if swap && ca.open[i] != cb.open[i] {
            std::mem::swap(&mut ca.open[i], &mut cb.open[i]);
            changed = true;
        }
    }
    for (j, &swap) in assign_mask.iter().enumerate() {
        if swap && ca.assign[j] != cb.assign[j] {
            std::mem::swap(&mut ca.assign[j], &mut cb.assign[j]);
            changed = true;
        }
    }
    if changed {
        for c in [&mut ca, &mut cb] {
            repair(instance, &mut c.open, &mut c.assign);
            c.objectives = None;
        }
    }
    (ca, cb)
}

/// Uniform crossover on open bits and assignment entries independently.
pub fn crossover(instance: &Instance, a: &Solution, b: &Solution, rng: &mut Rng) -> (Solution, Solution) {
    let open_mask: Vec<bool> = (0..instance.m()).map(|_| rng.gen::<bool>()).collect();
    let assign_mask: Vec<bool> = (0..instance.n()).map(|_| rng.gen::<bool>()).collect();
    crossover_with_masks(instance, a, b, &open_mask, &assign_mask)
}

/// Flips open bits and resamples assignments with probability `rate` each,
/// then repairs. Unchanged genomes keep their cached objectives.
pub fn mutate(instance: &Instance, solution: &Solution, rate: f64, rng: &mut Rng) -> Solution {
    let mut out = solution.clone();
    let m = instance.m();
    let mut changed = false;
    for bit in out.open.iter_mut() {
        if rng.gen::<f64>() < rate {
            *bit = !*bit;
            changed = true;
        }
    }
    for a in out.assign.iter_mut() {
        if rng.gen::<f64>() < rate {
            let new = rng.gen_range(0..m);
            changed |= new != *a;
            *a = new;
        }
    }
    if changed {
        repair(instance, &mut out.open, &mut out.assign);
        out.objectives = None;
    }
    out
}

/// Result of one NSGA-II run.
#[derive(Debug, Clone)]
pub struct Nsga2Run {
    /// Rank-0 front recorded at each checkpoint budget.
    pub checkpoints: BTreeMap<usize, ParetoSet>,
    /// Rank-0 front of the final population.
    pub front: ParetoSet,
    pub evaluations: usize,
    pub generations: usize,
    /// Rank-0 hypervolume after each generation (index 0 is the initial
    /// population) against a fixed reference that every feasible point
    /// dominates.
    pub hv_history: Vec<f64>,
}

/// Reference point dominated by every feasible solution of `instance`.
fn loose_reference(instance: &Instance) -> MinPoint {
    let fixed: f64 = instance.fixed_cost.iter().sum();
    let transport: f64 = (0..instance.n())
        .map(|j| {
            (0..instance.m())
                .map(|i| instance.service_cost(i, j))
                .fold(0.0, f64::max)
        })
        .sum();
    [fixed + transport + 1.0, 0.0]
}

fn front_hv(front: &[Solution], reference: MinPoint) -> f64 {
    let pts: Vec<MinPoint> = front
        .iter()
        .map(|s| to_min_space(s.objectives.unwrap()))
        .collect();
    hypervolume_2d(&pts, reference)
}

fn evaluate_all(instance: &Instance, solutions: &mut [Solution]) {
    for s in solutions.iter_mut() {
        s.objectives = Some(objectives_unchecked(instance, &s.open, &s.assign));
    }
}

/// Elitist NSGA-II. Every offspring counts as one objective evaluation; a
/// generation only runs if its full offspring batch fits in the budget.
pub fn nsga2_run(instance: &Instance, params: &MoeaParams) -> Result<Nsga2Run> {
    params.validate()?;
    let n_pop = params.population_size;
    let rate = params.effective_mutation_rate(instance);
    let mut rng = rng::substream(params.seed, 0);
    let reference = loose_reference(instance);

    let mut population = RankedPopulation::new(init_population(instance, params));
    let mut evaluations = n_pop;
    let mut generations = 0;
    let mut checkpoints = BTreeMap::new();
    let mut front = nondominated_filter(&instance.id, &population.front_zero())?;
    let mut hv_history = vec![front_hv(&front.solutions, reference)];
    record(&mut checkpoints, &params.checkpoint_budgets, evaluations, &front);

    while evaluations + n_pop <= params.max_evaluations {
        let mut offspring = Vec::with_capacity(n_pop);
        while offspring.len() < n_pop {
            let pa = tournament(&population, &mut rng);
            let pb = tournament(&population, &mut rng);
            let (a, b) = (&population.individuals[pa], &population.individuals[pb]);
            let (ca, cb) = if rng.gen::<f64>() < params.crossover_rate {
                crossover(instance, a, b, &mut rng)
            } else {
                (a.clone(), b.clone())
            };
            for child in [ca, cb] {
                let mut child = mutate(instance, &child, rate, &mut rng);
                if params.assignment_polish > 0.0 && rng.gen::<f64>() < params.assignment_polish {
                    for j in 0..instance.n() {
                        child.assign[j] = cheapest_open(instance, &child.open, j);
                    }
                    child.objectives = None;
                }
                offspring.push(child);
            }
        }
        evaluate_all(instance, &mut offspring);
        evaluations += n_pop;
        generations += 1;

        let mut combined = std::mem::take(&mut population.individuals);
        combined.extend(offspring);
        population = environmental_selection(combined, n_pop);

        front = nondominated_filter(&instance.id, &population.front_zero())?;
        hv_history.push(front_hv(&front.solutions, reference));
        record(&mut checkpoints, &params.checkpoint_budgets, evaluations, &front);

        if let Some(rule) = params.stall {
            if stalled(&hv_history, rule) {
                break;
            }
        }
    }
    // budgets beyond an early stop see the final front
    for &b in &params.checkpoint_budgets {
        checkpoints.entry(b).or_insert_with(|| front.clone());
    }
    front.sort_by_cost();
    for set in checkpoints.values_mut() {
        set.sort_by_cost();
    }
    Ok(Nsga2Run {
        checkpoints,
        front,
        evaluations,
        generations,
        hv_history,
    })
}

fn record(checkpoints: &mut BTreeMap<usize, ParetoSet>, budgets: &[usize], evaluations: usize, front: &ParetoSet) {
    for &b in budgets.iter().filter(|&&b| evaluations <= b) {
        checkpoints.insert(b, front.clone());
    }
}

fn stalled(history: &[f64], rule: StallRule) -> bool {
    let g = rule.generations;
    if g == 0 || history.len() <= g {
        return false;
    }
    let now = history[history.len() - 1];
    let then = history[history.len() - 1 - g];
    now - then < rule.tolerance * then.abs()
}

fn tournament(population: &RankedPopulation, rng: &mut Rng) -> usize {
    let n = population.individuals.len();
    let a = rng.gen_range(0..n);
    let b = rng.gen_range(0..n);
    population.better(a, b)
}

/// Keeps the best `target` individuals by front, breaking the last front by
/// crowding distance.
fn environmental_selection(combined: Vec<Solution>, target: usize) -> RankedPopulation {
    let points = objective_points(&combined);
    let mut chosen: Vec<(usize, usize, f64)> = Vec::with_capacity(target);
    for (r, front) in fast_nondominated_sort(&points).into_iter().enumerate() {
        if chosen.len() >= target {
            break;
        }
        let members: Vec<_> = front.iter().map(|&k| points[k]).collect();
        let crowd = crowding_distance(&members);
        let mut ranked: Vec<(usize, usize, f64)> =
            front.iter().zip(crowd).map(|(&k, d)| (k, r, d)).collect();
        if chosen.len() + ranked.len() > target {
            ranked.sort_by(|a, b| b.2.total_cmp(&a.2));
            ranked.truncate(target - chosen.len());
        }
        chosen.extend(ranked);
    }
    let mut slots: Vec<Option<Solution>> = combined.into_iter().map(Some).collect();
    let mut individuals = Vec::with_capacity(target);
    let mut rank = Vec::with_capacity(target);
    let mut crowding = Vec::with_capacity(target);
    for (k, r, d) in chosen {
        individuals.push(slots[k].take().unwrap());
        rank.push(r);
        crowding.push(d);
    }
    RankedPopulation {
        individuals,
        rank,
        crowding,
    }
}
