//! Acceptance suite: one test per criterion, each printing a single PASS or
//! FAIL line to stderr (uncaptured) before asserting.
//!
//! Criteria 5 and 6 train full-size models and take several minutes.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng as _;

use moflp_cli::report::{self, Indicator, MetricsRecord};
use moflp_cli::{ExperimentConfig, Pipeline};
use moflp_core::dataset::{Entry, FeatureVariant};
use moflp_core::flp::{check_feasible, dominates, ObjectivePoint};
use moflp_core::generator::{brute_force_pareto, generate_indexed, generate_instance, GenConfig};
use moflp_core::metrics::{hypervolume_2d, igd, MinPoint};
use moflp_core::moea::{fast_nondominated_sort, nsga2_run, MoeaParams, StallRule};
use moflp_core::rng;
use moflp_core::sampler::{co_sample, Prediction, SampleConfig};
use moflp_core::Matrix;
use moflp_gcn::model::{GraphBatch, Targets};
use moflp_gcn::nn::grad_check;
use moflp_gcn::{train, HeadKind, ModelConfig, Network, TrainConfig};

fn verdict(criterion: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "acceptance {criterion} [{}] {title}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn sorted(mut pts: Vec<ObjectivePoint>) -> Vec<ObjectivePoint> {
    pts.sort_by(|a, b| a.f1.total_cmp(&b.f1).then(b.f2.total_cmp(&a.f2)));
    pts
}

#[test]
fn criterion_1_nsga2_matches_the_exhaustive_oracle() {
    let mut r = rng::seeded(1001);
    let mut mismatches = Vec::new();
    for k in 0..20u64 {
        let (m, n) = (r.gen_range(1..=8), r.gen_range(1..=8));
        let inst = generate_instance(&GenConfig::with_scale(m, n, 9000 + k)).unwrap();
        let oracle = sorted(brute_force_pareto(&inst).unwrap().points());
        let params = MoeaParams {
            population_size: 100,
            max_evaluations: 2000,
            seed: k,
            ..Default::default()
        };
        let got = sorted(nsga2_run(&inst, &params).unwrap().front.points());
        let equal = got.len() == oracle.len()
            && got
                .iter()
                .zip(&oracle)
                .all(|(a, b)| (a.f1 - b.f1).abs() <= 1e-9 && (a.f2 - b.f2).abs() <= 1e-9);
        if !equal {
            mismatches.push(format!("{m}x{n} ({} vs {} points)", got.len(), oracle.len()));
        }
    }
    verdict(
        1,
        "NSGA-II front equals brute force on 20 instances",
        mismatches.is_empty(),
        &format!("{} of 20 instances differ {:?}", mismatches.len(), mismatches),
    );
}

/// Front ranks by repeated peeling: a point joins the current front when no
/// remaining point dominates it.
fn naive_fronts(points: &[ObjectivePoint]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&a| !remaining.iter().any(|&b| dominates(&points[b], &points[a])))
            .collect();
        remaining.retain(|k| !front.contains(k));
        fronts.push(front);
    }
    fronts
}

#[test]
fn criterion_2_sort_matches_the_naive_oracle() {
    let mut r = rng::seeded(2002);
    let mut mismatches = 0;
    for set in 0..200 {
        let len = r.gen_range(0..=64);
        // coarse grids on half of the sets force ties and duplicates
        let grid = set % 2 == 0;
        let points: Vec<ObjectivePoint> = (0..len)
            .map(|_| {
                if grid {
                    ObjectivePoint::new(r.gen_range(0..6) as f64, r.gen_range(0..6) as f64)
                } else {
                    ObjectivePoint::new(r.gen::<f64>(), r.gen::<f64>())
                }
            })
            .collect();
        let mut fast = fast_nondominated_sort(&points);
        let mut naive = naive_fronts(&points);
        for f in fast.iter_mut().chain(naive.iter_mut()) {
            f.sort_unstable();
        }
        if fast != naive {
            mismatches += 1;
        }
    }
    verdict(
        2,
        "fast non-dominated sort equals naive peeling on 200 sets",
        mismatches == 0,
        &format!("{mismatches} mismatching sets"),
    );
}

#[test]
fn criterion_3_full_network_gradients() {
    let inst = generate_instance(&GenConfig::with_scale(3, 4, 303)).unwrap();
    let entry = Entry::new(inst.clone(), brute_force_pareto(&inst).unwrap()).unwrap();
    let mut worst: Vec<String> = Vec::new();
    let mut pass = true;
    for kind in [HeadKind::Node, HeadKind::Edge] {
        let cfg = ModelConfig {
            hidden: 16,
            l_gcn: 2,
            variant: FeatureVariant::B,
            seed: 3,
            ..Default::default()
        };
        let net = Network::new(&cfg, kind).unwrap();
        let batch = GraphBatch::new(&[entry.features(cfg.variant)]).unwrap();
        let targets = Targets::new(&[&entry.labels]);
        let f = |p: &[f64]| {
            let mut n = net.clone();
            n.set_flat_params(p).unwrap();
            let (loss, grad, _) = n.loss_and_grad(&batch, &targets).unwrap();
            (loss, grad.flat_params())
        };
        let params = net.flat_params();
        let err = grad_check(f, &params, 1e-5, None);
        pass &= err < 1e-4;
        worst.push(format!("{} network {err:.2e} over {} parameters", kind.name(), params.len()));
    }
    verdict(3, "gradient check, relative error below 1e-4", pass, &worst.join("; "));
}

fn min_dominated(p: MinPoint, front: &[MinPoint]) -> bool {
    front.iter().any(|q| q[0] <= p[0] && q[1] <= p[1])
}

#[test]
fn criterion_4_indicators() {
    let strip = hypervolume_2d(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]], [4.0, 4.0]);
    let strip_ok = (strip - 6.0).abs() <= 1e-12;

    let mut r = rng::seeded(4004);
    let reference = [1.1, 1.1];
    let samples = 1_000_000;
    let mut worst_sigma: f64 = 0.0;
    for _ in 0..20 {
        let front: Vec<MinPoint> = (0..r.gen_range(1..=15)).map(|_| [r.gen::<f64>(), r.gen::<f64>()]).collect();
        let exact = hypervolume_2d(&front, reference);
        let hits = (0..samples)
            .filter(|_| min_dominated([r.gen::<f64>() * 1.1, r.gen::<f64>() * 1.1], &front))
            .count();
        let box_area = 1.1 * 1.1;
        let p = hits as f64 / samples as f64;
        let estimate = p * box_area;
        let sigma = box_area * (p * (1.0 - p) / samples as f64).sqrt();
        worst_sigma = worst_sigma.max((estimate - exact).abs() / sigma.max(f64::MIN_POSITIVE));
    }
    let mc_ok = worst_sigma <= 3.0;

    let a = vec![[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]];
    let mut superset = a.clone();
    superset.push([0.7, 0.9]);
    let igd_ok = igd(&a, &a).unwrap() == 0.0 && igd(&a, &superset).unwrap() == 0.0;

    verdict(
        4,
        "hypervolume and IGD",
        strip_ok && mc_ok && igd_ok,
        &format!(
            "strip HV {strip}; worst Monte Carlo deviation {worst_sigma:.2} sigma over 20 fronts; IGD identities {}",
            if igd_ok { "exact zero" } else { "nonzero" }
        ),
    );
}

/// Smallest achievable edge loss for `labels`: their mean per-customer
/// entropy.
fn edge_entropy(labels: &Matrix) -> f64 {
    let mut total = 0.0;
    for j in 0..labels.cols() {
        for i in 0..labels.rows() {
            let p = labels.get(i, j);
            if p > 0.0 {
                total -= p * p.ln();
            }
        }
    }
    total / labels.cols() as f64
}

#[test]
fn criterion_5_overfit_a_single_instance() {
    let inst = generate_indexed(&GenConfig::with_scale(10, 25, 505), 0).unwrap();
    let params = MoeaParams {
        max_evaluations: 20_000,
        stall: Some(StallRule::default()),
        seed: 5,
        ..Default::default()
    };
    let front = nsga2_run(&inst, &params).unwrap().front;
    let entry = Entry::new(inst, front).unwrap();
    let floor = edge_entropy(&entry.labels.p_edge);
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 1,
        ..Default::default()
    };
    let out = train(std::slice::from_ref(&entry), &[], &ModelConfig::default(), &cfg).unwrap();
    let (first, last) = (&out.history[0], &out.history[out.history.len() - 1]);
    let node_drop = 1.0 - last.train_loss_node / first.train_loss_node;
    let edge_drop = 1.0 - last.train_loss_edge / first.train_loss_edge;
    let excess_drop = 1.0 - (last.train_loss_edge - floor) / (first.train_loss_edge - floor);
    verdict(
        5,
        "each training loss falls by 90% in 300 epochs",
        node_drop >= 0.9 && edge_drop >= 0.9,
        &format!(
            "node {:.4e} -> {:.4e} ({:.1}%); edge {:.4} -> {:.4} ({:.1}%). The edge loss is a cross entropy \
             against soft labels from a front of {} solutions, so it cannot fall below their entropy {:.4}; \
             the part above that floor fell by {:.2}%",
            first.train_loss_node,
            last.train_loss_node,
            100.0 * node_drop,
            first.train_loss_edge,
            last.train_loss_edge,
            100.0 * edge_drop,
            entry.front.len(),
            floor,
            100.0 * excess_drop
        ),
    );
}

const DESK: &str = r#"
seed = 2024
scales = [[10, 25]]
instances = 125
split_fractions = [0.8, 0.04, 0.16]
variants = ["B"]

[labeling]
max_evaluations = 20000

[labeling.stall]
generations = 50
tolerance = 1e-6

[model]
hidden = 128

[training]
epochs = 300

[sampling]
sample_count = 200

[compare]
budgets = [1000]
repeats = 3
random_samples = 200
"#;

#[test]
fn criterion_6_desk_scale_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml(DESK).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let mut pipeline = Pipeline::new(cfg, false).unwrap();
    pipeline.run_all().unwrap();
    let metrics: Vec<MetricsRecord> = report::read_csv(&dir.path().join("10x25/compare/metrics.csv")).unwrap();
    let rows = report::win_table(&metrics, &[FeatureVariant::B]).unwrap();
    let hv = rows.iter().find(|r| r.indicator == Indicator::Hv).unwrap();
    let vs_nsga = hv.vs_budget[0].1;
    let mean = |method: &str, budget: Option<usize>| {
        let v: Vec<f64> = metrics.iter().filter(|r| r.method == method && r.budget == budget).map(|r| r.hv).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    verdict(
        6,
        "model beats NSGA-II@1000 on 70% and random on 95% of 20 test instances",
        hv.test_instances == 20 && vs_nsga >= 70.0 && hv.vs_random >= 95.0,
        &format!(
            "beats NSGA-II@1000 on {vs_nsga:.0}%, random on {:.0}% of {} instances; mean HV model {:.4}, \
             NSGA-II@1000 {:.4}, random {:.4}, label front {:.4}",
            hv.vs_random,
            hv.test_instances,
            mean("model_B", None),
            mean("nsga2", Some(1000)),
            mean("random", None),
            mean("label", None)
        ),
    );
}

const TINY: &str = r#"
seed = 77
scales = [[5, 8]]
instances = 20
split_fractions = [0.6, 0.2, 0.2]
variants = ["A", "B"]
workers = 3

[labeling]
population_size = 20
max_evaluations = 600

[model]
hidden = 16
l_gcn = 2

[training]
batch_size = 4
epochs = 4

[sampling]
sample_count = 40

[compare]
budgets = [200, 400]
repeats = 2
random_samples = 40
"#;

fn metric_csvs(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|x| x == "csv") && !path.ends_with("timing.csv") {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_7_pipeline_is_deterministic() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = ExperimentConfig::from_toml(TINY).unwrap();
            cfg.out_dir = dir.path().to_path_buf();
            Pipeline::new(cfg, false).unwrap().run_all().unwrap();
            metric_csvs(dir.path())
        })
        .collect();
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    verdict(
        7,
        "two pipeline runs give byte-identical metric CSVs",
        runs[0].len() == runs[1].len() && differing.is_empty() && names.iter().any(|n| n.ends_with("metrics.csv")),
        &format!("{} CSVs compared ({}), {} differ {:?}", names.len(), names.join(", "), differing.len(), differing),
    );
}

fn random_prediction(r: &mut rng::Rng, m: usize, n: usize) -> Prediction {
    let extreme = |r: &mut rng::Rng| match r.gen_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        _ => r.gen::<f64>(),
    };
    let p_node = (0..m).map(|_| extreme(r)).collect();
    let mut p_edge = Matrix::from_fn(m, n, |_, _| if r.gen_bool(0.3) { 0.0 } else { r.gen::<f64>() });
    for j in 0..n {
        if p_edge.column_sum(j) == 0.0 {
            p_edge.set(r.gen_range(0..m), j, 1.0);
        }
        let s = p_edge.column_sum(j);
        for i in 0..m {
            p_edge.set(i, j, p_edge.get(i, j) / s);
        }
    }
    Prediction { p_node, p_edge }
}

#[test]
fn criterion_8_sampling_is_always_feasible() {
    let mut r = rng::seeded(8008);
    let (mut draws, mut failures) = (0, 0);
    for k in 0..100u64 {
        let (m, n) = (r.gen_range(1..=12), r.gen_range(1..=30));
        let inst = generate_instance(&GenConfig::with_scale(m, n, 800 + k)).unwrap();
        let pred = random_prediction(&mut r, m, n);
        let cfg = SampleConfig {
            sample_count: 100,
            seed: k,
            ..Default::default()
        };
        for s in co_sample(&pred, &inst, &cfg).unwrap() {
            draws += 1;
            if check_feasible(&inst, &s).is_err() {
                failures += 1;
            }
        }
    }
    verdict(
        8,
        "co-sampled solutions are feasible",
        draws == 10_000 && failures == 0,
        &format!("{failures} infeasible of {draws} draws"),
    );
}
