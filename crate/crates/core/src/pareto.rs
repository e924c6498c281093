use crate::error::{Error, Result};
use crate::flp::{dominates, ObjectivePoint, Solution};

/// Mutually non-dominated, evaluated solutions of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoSet {
    pub instance_id: String,
    pub solutions: Vec<Solution>,
}

impl ParetoSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// Objective points in member order.
    ///
    /// Panics if a member was never evaluated.
    pub fn points(&self) -> Vec<ObjectivePoint> {
        self.solutions
            .iter()
            .map(|s| s.objectives.expect("Pareto set members are evaluated"))
            .collect()
    }

    /// Orders members by ascending cost, then descending reliability.
    pub fn sort_by_cost(&mut self) {
        self.solutions.sort_by(|a, b| {
            let (pa, pb) = (a.objectives.unwrap(), b.objectives.unwrap());
            pa.f1.total_cmp(&pb.f1).then(pb.f2.total_cmp(&pa.f2))
        });
    }
}

/// Indices of the maximal non-dominated subset of `points`.
///
/// Duplicate points keep only their first occurrence. Indices are returned in
/// input order.
pub fn nondominated_indices(points: &[ObjectivePoint]) -> Vec<usize> {
    // Sweep by ascending cost (then descending reliability, then index): a
    // point survives iff its reliability beats everything cheaper-or-equal.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (points[a], points[b]);
        pa.f1
            .total_cmp(&pb.f1)
            .then(pb.f2.total_cmp(&pa.f2))
            .then(a.cmp(&b))
    });
    let mut keep = Vec::new();
    let mut best_f2 = f64::NEG_INFINITY;
    for idx in order {
        if points[idx].f2 > best_f2 {
            keep.push(idx);
            best_f2 = points[idx].f2;
        }
    }
    keep.sort_unstable();
    keep
}

/// Reference O(n^2) filter used to cross-check [`nondominated_indices`].
pub fn nondominated_indices_naive(points: &[ObjectivePoint]) -> Vec<usize> {
    (0..points.len())
        .filter(|&k| {
            let p = &points[k];
            !points.iter().any(|q| dominates(q, p)) && !points[..k].contains(p)
        })
        .collect()
}

/// Keeps the maximal mutually non-dominated subset of evaluated solutions.
pub fn nondominated_filter(instance_id: &str, solutions: &[Solution]) -> Result<ParetoSet> {
    if solutions.is_empty() {
        return Err(Error::Domain("cannot filter an empty solution list".into()));
    }
    let points = solutions
        .iter()
        .enumerate()
        .map(|(k, s)| {
            s.objectives
                .ok_or_else(|| Error::Domain(format!("solution {k} has not been evaluated")))
        })
        .collect::<Result<Vec<_>>>()?;
    let solutions = nondominated_indices(&points)
        .into_iter()
        .map(|k| solutions[k].clone())
        .collect();
    Ok(ParetoSet {
        instance_id: instance_id.to_string(),
        solutions,
    })
}
