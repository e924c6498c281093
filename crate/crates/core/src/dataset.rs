//! Supervision targets, graph features, splits and batching.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flp::Instance;
use crate::matrix::Matrix;
use crate::pareto::ParetoSet;
use crate::rng;

/// Marginal selection frequencies over a Pareto set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPair {
    /// Fraction of solutions that open facility `i`.
    pub p_node: Vec<f64>,
    /// `p_edge[i][j]`: fraction of solutions that serve customer `j` from `i`.
    pub p_edge: Matrix,
}

impl LabelPair {
    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.p_node.len(), self.p_edge.cols());
        if self.p_edge.rows() != m {
            return Err(Error::validation("p_edge", format!("expected {m} rows")));
        }
        if self.p_node.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation("p_node", "entries must lie in [0, 1]"));
        }
        if self.p_edge.as_slice().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation("p_edge", "entries must lie in [0, 1]"));
        }
        for j in 0..n {
            let s = self.p_edge.column_sum(j);
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::validation("p_edge", format!("column {j} sums to {s}")));
            }
            for i in 0..m {
                if self.p_edge.get(i, j) > 0.0 && self.p_node[i] == 0.0 {
                    return Err(Error::validation(
                        "p_edge",
                        format!("customer {j} served by never-opened facility {i}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Frequency labels from a Pareto set of an `m x n` instance.
pub fn derive_labels(pareto: &ParetoSet, m: usize, n: usize) -> Result<LabelPair> {
    if pareto.is_empty() {
        return Err(Error::Domain("cannot derive labels from an empty Pareto set".into()));
    }
    let mut open_count = vec![0usize; m];
    let mut serve_count = vec![0usize; m * n];
    for (k, s) in pareto.solutions.iter().enumerate() {
        if s.open.len() != m || s.assign.len() != n {
            return Err(Error::Shape(format!(
                "Pareto member {k} is {}x{}, expected {m}x{n}",
                s.open.len(),
                s.assign.len()
            )));
        }
        for (i, _) in s.open.iter().enumerate().filter(|(_, o)| **o) {
            open_count[i] += 1;
        }
        for (j, &i) in s.assign.iter().enumerate() {
            if i >= m {
                return Err(Error::Shape(format!("Pareto member {k} assigns to facility {i}")));
            }
            serve_count[i * n + j] += 1;
        }
    }
    let total = pareto.len() as f64;
    Ok(LabelPair {
        p_node: open_count.iter().map(|&c| c as f64 / total).collect(),
        p_edge: Matrix::from_fn(m, n, |i, j| serve_count[i * n + j] as f64 / total),
    })
}

/// Which node features feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureVariant {
    /// Category, demand and fixed cost.
    A,
    /// Variant A plus mean/min/max of incident transport cost and reliability.
    B,
}

impl FeatureVariant {
    pub fn node_width(self) -> usize {
        match self {
            FeatureVariant::A => 3,
            FeatureVariant::B => 9,
        }
    }

    pub const EDGE_WIDTH: usize = 4;

    pub fn tag(self) -> &'static str {
        match self {
            FeatureVariant::A => "A",
            FeatureVariant::B => "B",
        }
    }
}

impl std::str::FromStr for FeatureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(FeatureVariant::A),
            "B" | "b" => Ok(FeatureVariant::B),
            other => Err(Error::Config(format!("unknown feature variant `{other}` (expected A or B)"))),
        }
    }
}

/// Which rows a standardisation statistic was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowGroup {
    Facilities,
    Customers,
    Edges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub column: usize,
    pub group: RowGroup,
    pub mean: f64,
    pub std: f64,
}

/// Standardised inputs of the bipartite graph.
///
/// Node rows are the `m` facilities followed by the `n` customers. Edge row
/// `i * n + j` joins facility `i` and customer `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFeatures {
    pub variant: FeatureVariant,
    pub m: usize,
    pub n: usize,
    pub node: Matrix,
    pub edge: Matrix,
    pub stats: Vec<FeatureStat>,
}

const CATEGORY_FACILITY: f64 = 0.0;
const CATEGORY_CUSTOMER: f64 = 1.0;

/// Node and edge features of `instance` under `variant`.
///
/// Category and adjacency flags are kept raw. Every other column is z-scored
/// over the rows it is defined on; zero-variance columns become 0 and padding
/// stays 0.
pub fn extract_features(instance: &Instance, variant: FeatureVariant) -> GraphFeatures {
    let (m, n) = (instance.m(), instance.n());
    let width = variant.node_width();
    let mut node = Matrix::zeros(m + n, width);
    let mut stats = Vec::new();

    for i in 0..m {
        node.set(i, 0, CATEGORY_FACILITY);
    }
    for j in 0..n {
        node.set(m + j, 0, CATEGORY_CUSTOMER);
    }
    stats.push(standardize_into(&mut node, 1, m..m + n, &instance.demand, RowGroup::Customers));
    stats.push(standardize_into(&mut node, 2, 0..m, &instance.fixed_cost, RowGroup::Facilities));

    if variant == FeatureVariant::B {
        for (offset, mat) in [(3, &instance.unit_cost), (6, &instance.reliability)] {
            let fac: Vec<[f64; 3]> = (0..m).map(|i| summarize((0..n).map(|j| mat.get(i, j)))).collect();
            let cust: Vec<[f64; 3]> = (0..n).map(|j| summarize((0..m).map(|i| mat.get(i, j)))).collect();
            for k in 0..3 {
                let col = offset + k;
                let fv: Vec<f64> = fac.iter().map(|a| a[k]).collect();
                let cv: Vec<f64> = cust.iter().map(|a| a[k]).collect();
                stats.push(standardize_into(&mut node, col, 0..m, &fv, RowGroup::Facilities));
                stats.push(standardize_into(&mut node, col, m..m + n, &cv, RowGroup::Customers));
            }
        }
    }

    let mut edge = Matrix::zeros(m * n, FeatureVariant::EDGE_WIDTH);
    for e in 0..m * n {
        edge.set(e, 0, 1.0);
    }
    for (col, mat) in [(1, &instance.distance), (2, &instance.unit_cost), (3, &instance.reliability)] {
        stats.push(standardize_into(&mut edge, col, 0..m * n, mat.as_slice(), RowGroup::Edges));
    }

    GraphFeatures {
        variant,
        m,
        n,
        node,
        edge,
        stats,
    }
}

fn summarize(values: impl Iterator<Item = f64>) -> [f64; 3] {
    let (mut sum, mut lo, mut hi, mut count) = (0.0, f64::INFINITY, f64::NEG_INFINITY, 0usize);
    for v in values {
        sum += v;
        lo = lo.min(v);
        hi = hi.max(v);
        count += 1;
    }
    [sum / count as f64, lo, hi]
}

fn standardize_into(
    target: &mut Matrix,
    column: usize,
    rows: std::ops::Range<usize>,
    values: &[f64],
    group: RowGroup,
) -> FeatureStat {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    let std = var.sqrt();
    let constant = std <= 1e-12 * mean.abs().max(1.0);
    for (r, v) in rows.zip(values) {
        target.set(r, column, if constant { 0.0 } else { (v - mean) / std });
    }
    FeatureStat {
        column,
        group,
        mean,
        std: if constant { 0.0 } else { std },
    }
}

/// One supervised example.
#[derive(Debug, Clone)]
pub struct Entry {
    pub instance: Instance,
    pub front: ParetoSet,
    pub labels: LabelPair,
    pub features_a: GraphFeatures,
    pub features_b: GraphFeatures,
}

impl Entry {
    pub fn new(instance: Instance, front: ParetoSet) -> Result<Self> {
        let labels = derive_labels(&front, instance.m(), instance.n())?;
        let features_a = extract_features(&instance, FeatureVariant::A);
        let features_b = extract_features(&instance, FeatureVariant::B);
        Ok(Entry {
            instance,
            front,
            labels,
            features_a,
            features_b,
        })
    }

    pub fn features(&self, variant: FeatureVariant) -> &GraphFeatures {
        match variant {
            FeatureVariant::A => &self.features_a,
            FeatureVariant::B => &self.features_b,
        }
    }

    pub fn scale(&self) -> (usize, usize) {
        (self.instance.m(), self.instance.n())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Entries of one split, all at one scale.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub split: Split,
    pub scale: (usize, usize),
    pub entries: Vec<Entry>,
}

impl Dataset {
    pub fn new(split: Split, scale: (usize, usize), entries: Vec<Entry>) -> Result<Self> {
        let mut ids = std::collections::HashSet::new();
        for e in &entries {
            if e.scale() != scale {
                return Err(Error::validation(
                    "scale",
                    format!("entry {} is {:?}, dataset is {:?}", e.instance.id, e.scale(), scale),
                ));
            }
            if !ids.insert(e.instance.id.clone()) {
                return Err(Error::validation("id", format!("duplicate entry {}", e.instance.id)));
            }
        }
        Ok(Dataset { split, scale, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sizes of the three splits for `total` entries.
pub fn split_sizes(total: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let train = ((fractions[0] * total as f64).round() as usize).min(total);
    let val = ((fractions[1] * total as f64).round() as usize).min(total - train);
    Ok([train, val, total - train - val])
}

/// Shuffles `(instance, front)` pairs with `seed` and cuts them into
/// train/validation/test datasets.
pub fn build_dataset(
    pairs: Vec<(Instance, ParetoSet)>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let scale = match pairs.first() {
        Some((inst, _)) => (inst.m(), inst.n()),
        None => return Err(Error::Domain("no instances to split".into())),
    };
    if let Some((inst, _)) = pairs.iter().find(|(i, _)| (i.m(), i.n()) != scale) {
        return Err(Error::validation(
            "scale",
            format!("instance {} is {}x{}, expected {}x{}", inst.id, inst.m(), inst.n(), scale.0, scale.1),
        ));
    }
    let [n_train, n_val, _] = split_sizes(pairs.len(), fractions)?;
    let mut entries = pairs
        .into_iter()
        .map(|(inst, front)| Entry::new(inst, front))
        .collect::<Result<Vec<_>>>()?;
    entries.shuffle(&mut rng::seeded(seed));
    let test = entries.split_off(n_train + n_val);
    let val = entries.split_off(n_train);
    Ok((
        Dataset::new(Split::Train, scale, entries)?,
        Dataset::new(Split::Val, scale, val)?,
        Dataset::new(Split::Test, scale, test)?,
    ))
}

/// Epoch-shuffled index batches; the last batch may be short.
pub fn batch_iter(dataset_len: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if dataset_len == 0 {
        return Err(Error::Domain("cannot batch an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..dataset_len).collect();
    order.shuffle(&mut rng::seeded(epoch_seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flp::fixtures::t1;
    use crate::flp::Solution;
    use crate::generator::{brute_force_pareto, generate_indexed, generate_instance, GenConfig};
    use proptest::prelude::*;

    fn set(solutions: Vec<Solution>) -> ParetoSet {
        ParetoSet {
            instance_id: "x".into(),
            solutions,
        }
    }

    #[test]
    fn node_label_frequencies() {
        let labels = derive_labels(
            &set(vec![
                Solution::new(vec![true, false], vec![0, 0]),
                Solution::new(vec![true, true], vec![0, 1]),
            ]),
            2,
            2,
        )
        .unwrap();
        assert_eq!(labels.p_node, vec![1.0, 0.5]);
        labels.validate().unwrap();
    }

    #[test]
    fn t1_edge_labels() {
        let front = brute_force_pareto(&t1()).unwrap();
        let labels = derive_labels(&front, 2, 2).unwrap();
        assert!((labels.p_edge.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((labels.p_edge.get(1, 0) - 1.0 / 3.0).abs() < 1e-15);
        labels.validate().unwrap();
    }

    #[test]
    fn single_solution_labels_are_binary() {
        let labels = derive_labels(&set(vec![Solution::new(vec![false, true, true], vec![1, 2, 2, 1])]), 3, 4).unwrap();
        assert!(labels.p_node.iter().chain(labels.p_edge.as_slice()).all(|&p| p == 0.0 || p == 1.0));
    }

    #[test]
    fn empty_front_rejected() {
        assert!(matches!(derive_labels(&set(vec![]), 2, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn variant_a_facility_rows() {
        let inst = generate_instance(&GenConfig::with_scale(4, 6, 1)).unwrap();
        let f = extract_features(&inst, FeatureVariant::A);
        assert_eq!(f.node.cols(), 3);
        let mean = inst.fixed_cost.iter().sum::<f64>() / 4.0;
        let std = (inst.fixed_cost.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        for i in 0..4 {
            assert_eq!(f.node.get(i, 0), 0.0);
            assert_eq!(f.node.get(i, 1), 0.0);
            assert!((f.node.get(i, 2) - (inst.fixed_cost[i] - mean) / std).abs() < 1e-12);
        }
        for j in 0..6 {
            assert_eq!(f.node.get(4 + j, 0), 1.0);
            assert_eq!(f.node.get(4 + j, 2), 0.0);
        }
        assert_eq!(f.edge.cols(), 4);
        assert!((0..24).all(|e| f.edge.get(e, 0) == 1.0));
    }

    #[test]
    fn variant_b_adds_six_columns() {
        let inst = generate_instance(&GenConfig::with_scale(3, 5, 2)).unwrap();
        let a = extract_features(&inst, FeatureVariant::A);
        let b = extract_features(&inst, FeatureVariant::B);
        assert_eq!(b.node.cols() - a.node.cols(), 6);
        for r in 0..8 {
            assert_eq!(&b.node.row(r)[..3], a.node.row(r));
        }
    }

    #[test]
    fn constant_reliability_standardizes_to_zero() {
        let mut inst = generate_instance(&GenConfig::with_scale(3, 4, 3)).unwrap();
        inst.reliability = Matrix::filled(3, 4, 0.7);
        let f = extract_features(&inst, FeatureVariant::B);
        assert!((0..12).all(|e| f.edge.get(e, 3) == 0.0));
        assert!((0..7).all(|r| (6..9).all(|c| f.node.get(r, c) == 0.0)));
    }

    #[test]
    fn standardized_columns_have_unit_moments() {
        let inst = generate_instance(&GenConfig::with_scale(6, 9, 4)).unwrap();
        let f = extract_features(&inst, FeatureVariant::B);
        for col in 1..4 {
            let vals: Vec<f64> = (0..54).map(|e| f.edge.get(e, col)).collect();
            let mean = vals.iter().sum::<f64>() / 54.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 54.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn features_scale_equivariant() {
        let inst = generate_instance(&GenConfig::with_scale(5, 7, 5)).unwrap();
        let mut scaled = inst.clone();
        scaled.fixed_cost.iter_mut().for_each(|f| *f *= 37.5);
        for v in [FeatureVariant::A, FeatureVariant::B] {
            let a = extract_features(&inst, v);
            let b = extract_features(&scaled, v);
            for (x, y) in a.node.as_slice().iter().zip(b.node.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
            assert_eq!(a, extract_features(&inst, v));
        }
    }

    fn pairs(count: u64, m: usize, n: usize) -> Vec<(Instance, ParetoSet)> {
        let cfg = GenConfig::with_scale(m, n, 9);
        (0..count)
            .map(|k| {
                let inst = generate_indexed(&cfg, k).unwrap();
                let front = brute_force_pareto(&inst).unwrap();
                (inst, front)
            })
            .collect()
    }

    #[test]
    fn split_sizes_match_fractions() {
        assert_eq!(split_sizes(1000, [0.7, 0.2, 0.1]).unwrap(), [700, 200, 100]);
        assert_eq!(split_sizes(13, [1.0, 0.0, 0.0]).unwrap(), [13, 0, 0]);
        assert!(split_sizes(10, [0.5, 0.2, 0.1]).is_err());
    }

    #[test]
    fn split_is_deterministic_partition() {
        let (tr, va, te) = build_dataset(pairs(20, 3, 4), [0.7, 0.2, 0.1], 5).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (14, 4, 2));
        let mut ids: Vec<String> = [&tr, &va, &te]
            .iter()
            .flat_map(|d| d.entries.iter().map(|e| e.instance.id.clone()))
            .collect();
        let (tr2, _, _) = build_dataset(pairs(20, 3, 4), [0.7, 0.2, 0.1], 5).unwrap();
        let a: Vec<_> = tr.entries.iter().map(|e| &e.instance.id).collect();
        let b: Vec<_> = tr2.entries.iter().map(|e| &e.instance.id).collect();
        assert_eq!(a, b);
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 20);

        let (tr, va, te) = build_dataset(pairs(5, 2, 3), [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (5, 0, 0));
    }

    #[test]
    fn split_rejects_mixed_scales() {
        let mut p = pairs(3, 2, 3);
        p.extend(pairs(1, 3, 3));
        assert!(matches!(build_dataset(p, [1.0, 0.0, 0.0], 0), Err(Error::Validation { .. })));
    }

    #[test]
    fn batching() {
        assert_eq!(batch_iter(700, 20, 1).unwrap().len(), 35);
        let b = batch_iter(7, 20, 1).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 7);
        assert!(batch_iter(0, 20, 1).is_err());
        assert!(batch_iter(5, 0, 1).is_err());
        let mut all: Vec<usize> = batch_iter(53, 10, 3).unwrap().concat();
        all.sort_unstable();
        assert_eq!(all, (0..53).collect::<Vec<_>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn labels_are_distributions(m in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
            let inst = generate_instance(&GenConfig::with_scale(m, n, seed)).unwrap();
            let labels = derive_labels(&brute_force_pareto(&inst).unwrap(), m, n).unwrap();
            prop_assert!(labels.validate().is_ok());
        }
    }
}
