//! The experiment pipeline: gen, solve, label, split, train, predict, eval and
//! compare, plus the sensitivity sweep.
//!
//! Stage hashes are computed from the configuration alone, so a single verb
//! can check that its inputs were built from the current configuration
//! without rebuilding them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use moflp_core::dataset::{build_dataset, derive_labels, Entry, FeatureVariant};
use moflp_core::generator::generate_indexed;
use moflp_core::io::{self, SCHEMA_VERSION};
use moflp_core::metrics::{indicators, make_frame, NormalizationFrame};
use moflp_core::moea::{nsga2_run, random_solutions};
use moflp_core::pareto::{nondominated_filter, nondominated_indices};
use moflp_core::rng::mix_seed;
use moflp_core::sampler::{sample_front, SampleConfig};
use moflp_core::{Instance, ObjectivePoint, ParetoSet};
use moflp_gcn::checkpoint::{load_checkpoint, save_checkpoint};
use moflp_gcn::model::predict;
use moflp_gcn::{train_with_progress, ModelConfig, Network};

use crate::cache::{stage_hash, Cache, StageEvent};
use crate::config::{ExperimentConfig, Stage, SweepAxis};
use crate::error::{Error, Result};
use crate::par::par_map;
use crate::report::{
    self, model_method, scale_tag, EvalRecord, MetricsRecord, SweepRecord, TimingRecord, METHOD_LABEL,
    METHOD_NSGA2, METHOD_RANDOM,
};
use crate::svg::{self, Chart, Series, Style};

/// One pipeline step, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Step {
    Gen,
    Solve,
    Label,
    Split,
    Train,
    Predict,
    Eval,
    Compare,
}

impl Step {
    pub const ALL: [Step; 8] = [
        Step::Gen,
        Step::Solve,
        Step::Label,
        Step::Split,
        Step::Train,
        Step::Predict,
        Step::Eval,
        Step::Compare,
    ];

    pub fn verb(self) -> &'static str {
        match self {
            Step::Gen => "gen",
            Step::Solve => "solve",
            Step::Label => "label",
            Step::Split => "split",
            Step::Train => "train",
            Step::Predict => "predict",
            Step::Eval => "eval",
            Step::Compare => "compare",
        }
    }
}

/// File layout below `<out_dir>/<m>x<n>/`.
#[derive(Debug, Clone)]
pub struct ScaleLayout {
    pub dir: PathBuf,
}

impl ScaleLayout {
    pub fn new(out_dir: &Path, m: usize, n: usize) -> Self {
        ScaleLayout {
            dir: out_dir.join(scale_tag(m, n)),
        }
    }

    pub fn index(&self) -> PathBuf {
        self.dir.join("instances/index.json")
    }

    pub fn instance(&self, id: &str) -> PathBuf {
        self.dir.join("instances").join(format!("{id}.json"))
    }

    pub fn front(&self, id: &str) -> PathBuf {
        self.dir.join("fronts").join(format!("{id}.json"))
    }

    pub fn dataset(&self) -> PathBuf {
        self.dir.join("dataset")
    }

    pub fn labels(&self, id: &str) -> PathBuf {
        self.dataset().join("labels").join(format!("{id}.json"))
    }

    pub fn split(&self) -> PathBuf {
        self.dataset().join("split.json")
    }

    pub fn model_dir(&self, v: FeatureVariant) -> PathBuf {
        self.dir.join("models").join(v.tag())
    }

    pub fn checkpoint(&self, v: FeatureVariant) -> PathBuf {
        self.model_dir(v).join("checkpoint.json")
    }

    pub fn prediction(&self, v: FeatureVariant, id: &str) -> PathBuf {
        self.dir.join("predictions").join(v.tag()).join(format!("{id}.json"))
    }

    pub fn prediction_timing(&self, v: FeatureVariant) -> PathBuf {
        self.dir.join("predictions").join(v.tag()).join("timing.csv")
    }

    pub fn eval(&self, v: FeatureVariant) -> PathBuf {
        self.dir.join("eval").join(format!("{}.csv", v.tag()))
    }

    pub fn compare(&self) -> PathBuf {
        self.dir.join("compare")
    }

    pub fn sweep(&self, axis: SweepAxis) -> PathBuf {
        self.dir.join("sweep").join(axis.name())
    }

    pub fn sweep_value(&self, axis: SweepAxis, value: usize) -> PathBuf {
        self.sweep(axis).join(value.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexDoc {
    schema_version: u32,
    ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDoc {
    pub schema_version: u32,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).expect("documents serialise") + "\n";
    io::write_text(path, &text)?;
    Ok(path.to_path_buf())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = io::read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Hashes of every stage of one scale.
struct Plan {
    tag: String,
    m: usize,
    n: usize,
    layout: ScaleLayout,
    gen: String,
    solve: String,
    label: String,
    split: String,
    train: BTreeMap<FeatureVariant, String>,
    predict: BTreeMap<FeatureVariant, String>,
    eval: BTreeMap<FeatureVariant, String>,
    compare: String,
}

impl Plan {
    fn new(cfg: &ExperimentConfig, m: usize, n: usize) -> Self {
        let gen = stage_hash("gen", &(cfg.gen_config(m, n), cfg.instances), &[]);
        let solve = stage_hash("solve", &(&cfg.labeling, cfg.stage_seed(Stage::Solve)), &[&gen]);
        let label = stage_hash("label", &(), &[&solve]);
        let split = stage_hash("split", &(cfg.split_fractions, cfg.stage_seed(Stage::Split)), &[&label]);
        let mut train = BTreeMap::new();
        let mut predict = BTreeMap::new();
        let mut eval = BTreeMap::new();
        for &v in &cfg.variants {
            let t = stage_hash("train", &(cfg.model_config(v), cfg.train_config()), &[&split]);
            let p = stage_hash("predict", &(&cfg.sampling, cfg.stage_seed(Stage::Predict)), &[&t]);
            eval.insert(v, stage_hash("eval", &(), &[&p]));
            train.insert(v, t);
            predict.insert(v, p);
        }
        let upstream: Vec<&str> = predict.values().map(String::as_str).collect();
        let compare = stage_hash(
            "compare",
            &(&cfg.compare, &cfg.labeling, cfg.stage_seed(Stage::Compare), &cfg.variants),
            &upstream,
        );
        Plan {
            tag: scale_tag(m, n),
            m,
            n,
            layout: ScaleLayout::new(&cfg.out_dir, m, n),
            gen,
            solve,
            label,
            split,
            train,
            predict,
            eval,
            compare,
        }
    }

    fn key(&self, stage: &str) -> String {
        format!("{}/{stage}", self.tag)
    }

    fn vkey(&self, stage: &str, v: FeatureVariant) -> String {
        format!("{}/{stage}/{}", self.tag, v.tag())
    }
}

/// Test-split data shared by the evaluation stages.
struct TestSet {
    ids: Vec<String>,
    /// Position of each test instance in the generated index; seeds per
    /// instance derive from it.
    index: Vec<u64>,
}

pub struct Pipeline {
    ctx: Context,
    cache: Cache,
}

struct Context {
    cfg: ExperimentConfig,
    workers: usize,
    progress: bool,
}

impl Context {
    fn note(&self, msg: impl AsRef<str>) {
        if self.progress {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn ids(&self, plan: &Plan) -> Result<Vec<String>> {
        let doc: IndexDoc = read_json(&plan.layout.index())?;
        Ok(doc.ids)
    }

    fn split_doc(&self, plan: &Plan) -> Result<SplitDoc> {
        read_json(&plan.layout.split())
    }

    fn entries(&self, plan: &Plan, ids: &[String]) -> Result<Vec<Entry>> {
        par_map(ids, self.workers, |_, id| {
            let inst = io::read_instance(&plan.layout.instance(id))?;
            let front = io::read_pareto(&plan.layout.front(id))?;
            Ok(Entry::new(inst, front)?)
        })
    }

    fn test_set(&self, plan: &Plan) -> Result<TestSet> {
        let all = self.ids(plan)?;
        let position: BTreeMap<&str, u64> = all.iter().enumerate().map(|(k, id)| (id.as_str(), k as u64)).collect();
        let ids = self.split_doc(plan)?.test;
        let index = ids
            .iter()
            .map(|id| {
                position.get(id.as_str()).copied().ok_or_else(|| Error::Corrupt {
                    path: plan.layout.split(),
                    message: format!("test instance {id} is not in the instance index"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TestSet { ids, index })
    }

    fn load_models(&self, path: &Path) -> Result<(Network, Network)> {
        if !path.exists() {
            return Err(Error::MissingArtifact {
                what: "trained checkpoint".into(),
                path: path.to_path_buf(),
                hint: "moflp train".into(),
            });
        }
        Ok(load_checkpoint(&io::read_text(path)?)?)
    }

    /// Trains both networks and writes the checkpoint and loss history to
    /// `dir`.
    fn fit(&self, plan: &Plan, model: &ModelConfig, key: &str, dir: &Path) -> Result<Vec<PathBuf>> {
        let split = self.split_doc(plan)?;
        let train_set = self.entries(plan, &split.train)?;
        let val_set = self.entries(plan, &split.val)?;
        let tcfg = self.cfg.train_config();
        let started = Instant::now();
        let outcome = train_with_progress(&train_set, &val_set, model, &tcfg, |r| {
            self.note(format!(
                "[{key}] epoch {}/{} train node {:.5} edge {:.5}{}",
                r.epoch,
                tcfg.epochs,
                r.train_loss_node,
                r.train_loss_edge,
                match (r.val_loss_node, r.val_loss_edge) {
                    (Some(a), Some(b)) => format!(" val node {a:.5} edge {b:.5}"),
                    _ => String::new(),
                }
            ))
        })?;
        let checkpoint = dir.join("checkpoint.json");
        io::write_text(&checkpoint, &save_checkpoint(&outcome.node, &outcome.edge)?)?;
        let history = report::write_csv(&dir.join("history.csv"), &outcome.history)?;
        let summary = write_json(
            &dir.join("summary.json"),
            &serde_json::json!({
                "best_epoch_node": outcome.best_epoch_node,
                "best_epoch_edge": outcome.best_epoch_edge,
                "train_instances": train_set.len(),
                "val_instances": val_set.len(),
                "seconds": started.elapsed().as_secs_f64(),
            }),
        )?;
        Ok(vec![checkpoint, history, summary])
    }

    /// Samples a front per test instance and writes it to `path_of(id)`.
    fn sample_fronts(
        &self,
        tests: &TestSet,
        plan: &Plan,
        node: &Network,
        edge: &Network,
        path_of: impl Fn(&str) -> PathBuf + Sync,
    ) -> Result<Vec<(PathBuf, f64)>> {
        let seed = self.cfg.stage_seed(Stage::Predict);
        let sampling = &self.cfg.sampling;
        par_map(&tests.ids, self.workers, |k, id| {
            let inst = io::read_instance(&plan.layout.instance(id))?;
            let started = Instant::now();
            let pred = predict(&inst, node, edge)?;
            let scfg = SampleConfig {
                seed: mix_seed(seed, tests.index[k]),
                ..sampling.clone()
            };
            let front = sample_front(&pred, &inst, &scfg)?;
            let secs = started.elapsed().as_secs_f64();
            let path = path_of(id);
            io::write_pareto(&path, &front)?;
            Ok((path, secs))
        })
    }

    fn compare_body(&self, plan: &Plan, seed: u64) -> Result<Vec<PathBuf>> {
        let tests = self.test_set(plan)?;
        let variants = self.cfg.variants.clone();
        let cmp = &self.cfg.compare;
        let mut budgets = cmp.budgets.clone();
        budgets.sort_unstable();
        budgets.dedup();
        let mut model_secs: BTreeMap<(String, String), f64> = BTreeMap::new();
        for &v in &variants {
            for t in report::read_csv::<TimingRecord>(&plan.layout.prediction_timing(v))? {
                model_secs.insert((t.method, t.instance_id), t.seconds);
            }
        }
        self.note(format!(
            "[{key}] {} test instances, {} NSGA-II repeats up to {} evaluations",
            tests.ids.len(),
            cmp.repeats,
            budgets.last().copied().unwrap_or(0),
            key = plan.key("compare")
        ));

        struct Outcome {
            metrics: Vec<MetricsRecord>,
            timing: Vec<TimingRecord>,
            fronts: Vec<(String, Vec<ObjectivePoint>, Style)>,
        }
        let results = par_map(&tests.ids, self.workers, |k, id| {
            let inst: Instance = io::read_instance(&plan.layout.instance(id))?;
            let base = mix_seed(seed, tests.index[k]);
            let label = io::read_pareto(&plan.layout.front(id))?;
            let mut models: Vec<(String, ParetoSet)> = Vec::new();
            for &v in &variants {
                models.push((model_method(v), io::read_pareto(&plan.layout.prediction(v, id))?));
            }
            let mut timing = Vec::new();
            let time = |method: String, seconds: f64| TimingRecord {
                scale: plan.tag.clone(),
                instance_id: id.clone(),
                method,
                seconds,
            };
            let mut runs = Vec::with_capacity(cmp.repeats);
            for r in 0..cmp.repeats {
                let started = Instant::now();
                let run = nsga2_run(&inst, &self.cfg.baseline_params(mix_seed(base, r as u64))?)?;
                timing.push(time(format!("{METHOD_NSGA2}#{r}"), started.elapsed().as_secs_f64()));
                runs.push(run.checkpoints);
            }
            let started = Instant::now();
            let random = nondominated_filter(id, &random_solutions(&inst, cmp.random_samples, mix_seed(base, u64::MAX)))?;
            timing.push(time(METHOD_RANDOM.to_string(), started.elapsed().as_secs_f64()));
            for (method, _) in &models {
                if let Some(&s) = model_secs.get(&(method.clone(), id.clone())) {
                    timing.push(time(method.clone(), s));
                }
            }

            let mut all: Vec<Vec<ObjectivePoint>> = vec![label.points(), random.points()];
            all.extend(models.iter().map(|(_, f)| f.points()));
            for run in &runs {
                for &b in &budgets {
                    let front = run.get(&b).ok_or_else(|| {
                        Error::Report(format!("NSGA-II run on {id} did not record budget {b}"))
                    })?;
                    all.push(front.points());
                }
            }
            let refs: Vec<&[ObjectivePoint]> = all.iter().map(Vec::as_slice).collect();
            let (frame, reference) = frame_of(&refs)?;
            let mut metrics = Vec::new();
            let mut push = |method: &str, budget: Option<usize>, repeat: Option<usize>, front: &ParetoSet| -> Result<()> {
                let got = indicators(&frame, &reference, &front.points())?;
                metrics.push(MetricsRecord {
                    scale: plan.tag.clone(),
                    instance_id: id.clone(),
                    method: method.to_string(),
                    budget,
                    repeat,
                    hv: got.hv,
                    igd: got.igd,
                    front_size: front.len(),
                });
                Ok(())
            };
            push(METHOD_LABEL, None, None, &label)?;
            for (method, front) in &models {
                push(method, None, None, front)?;
            }
            for &b in &budgets {
                for (r, run) in runs.iter().enumerate() {
                    push(METHOD_NSGA2, Some(b), Some(r), &run[&b])?;
                }
            }
            push(METHOD_RANDOM, None, None, &random)?;

            let mut fronts = Vec::new();
            if k < cmp.scatter_instances {
                fronts.push((METHOD_LABEL.to_string(), label.points(), Style::Step));
                for (method, front) in &models {
                    fronts.push((method.clone(), front.points(), Style::Step));
                }
                for &b in &budgets {
                    fronts.push((format!("{METHOD_NSGA2}@{b} #0"), runs[0][&b].points(), Style::Step));
                }
                fronts.push((METHOD_RANDOM.to_string(), random.points(), Style::Markers));
            }
            Ok(Outcome { metrics, timing, fronts })
        })?;

        let dir = plan.layout.compare();
        let metrics: Vec<MetricsRecord> = results.iter().flat_map(|o| o.metrics.iter().cloned()).collect();
        let timing: Vec<TimingRecord> = results.iter().flat_map(|o| o.timing.iter().cloned()).collect();
        let mut written = vec![
            report::write_csv(&dir.join("metrics.csv"), &metrics)?,
            report::write_csv(&dir.join("timing.csv"), &timing)?,
        ];
        let wins = report::win_table(&metrics, &variants)?;
        let win_path = dir.join("win_table.csv");
        io::write_text(&win_path, &report::render_win_table(&wins))?;
        written.push(win_path);
        let diffs = report::hv_differences(&metrics, &variants)?;
        written.push(report::write_csv(&dir.join("hv_difference.csv"), &diffs)?);
        for &v in &variants {
            let series = budgets
                .iter()
                .map(|&b| Series {
                    name: format!("vs {METHOD_NSGA2}@{b}"),
                    points: diffs
                        .iter()
                        .filter(|d| d.variant == v.tag() && d.budget == b)
                        .enumerate()
                        .map(|(x, d)| (x as f64, d.difference))
                        .collect(),
                    style: Style::Line,
                })
                .collect();
            let chart = Chart {
                title: format!("{} variant {}: model HV minus NSGA-II HV", plan.tag, v.tag()),
                x_label: "test instance".into(),
                y_label: "HV difference".into(),
                series,
            };
            let path = dir.join(format!("hv_difference_{}.svg", v.tag()));
            io::write_text(&path, &chart.render())?;
            written.push(path);
        }
        for (id, o) in tests.ids.iter().zip(&results).filter(|(_, o)| !o.fronts.is_empty()) {
            let chart = Chart {
                title: format!("fronts of {id}"),
                x_label: "total cost".into(),
                y_label: "system reliability".into(),
                series: o
                    .fronts
                    .iter()
                    .map(|(name, pts, style)| Series {
                        name: name.clone(),
                        points: pts.iter().map(|p| (p.f1, p.f2)).collect(),
                        style: *style,
                    })
                    .collect(),
            };
            let path = dir.join(format!("fronts_{id}.svg"));
            io::write_text(&path, &chart.render())?;
            written.push(path);
        }
        for row in &wins {
            let cells: Vec<String> = row.vs_budget.iter().map(|(b, p)| format!("@{b} {p:.1}%")).collect();
            self.note(format!(
                "[{}] variant {} {} wins: {} random {:.1}%",
                plan.key("compare"),
                row.variant,
                row.indicator.name(),
                cells.join(" "),
                row.vs_random
            ));
        }
        Ok(written)
    }

    /// Indicators of every swept model, measured per instance in a frame
    /// shared by all values so that the boxes are comparable.
    fn sweep_report(&self, plan: &Plan, axis: SweepAxis, values: &[usize]) -> Result<PathBuf> {
        let tests = self.test_set(plan)?;
        let per_instance = par_map(&tests.ids, self.workers, |_, id| {
            let label = io::read_pareto(&plan.layout.front(id))?.points();
            let fronts = values
                .iter()
                .map(|&v| Ok(io::read_pareto(&plan.layout.sweep_value(axis, v).join("fronts").join(format!("{id}.json")))?.points()))
                .collect::<Result<Vec<_>>>()?;
            let mut all: Vec<&[ObjectivePoint]> = vec![&label];
            all.extend(fronts.iter().map(Vec::as_slice));
            let (frame, reference) = frame_of(&all)?;
            fronts
                .iter()
                .map(|f| Ok(indicators(&frame, &reference, f)?))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut records = Vec::new();
        for (j, &value) in values.iter().enumerate() {
            for (id, ind) in tests.ids.iter().zip(&per_instance) {
                records.push(SweepRecord {
                    axis: axis.name().to_string(),
                    value,
                    instance_id: id.clone(),
                    hv: ind[j].hv,
                    igd: ind[j].igd,
                });
            }
        }
        let dir = plan.layout.sweep(axis);
        report::write_csv(&dir.join("raw.csv"), &records)?;
        let stats = report::sweep_stats(&records);
        report::write_csv(&dir.join("stats.csv"), &stats)?;
        for ind in ["HV", "IGD"] {
            let groups: Vec<(String, [f64; 5])> = stats
                .iter()
                .filter(|s| s.indicator == ind)
                .map(|s| (s.value.to_string(), [s.min, s.q1, s.median, s.q3, s.max]))
                .collect();
            let svg = svg::boxplot(
                &format!("{}: {ind} by {}", plan.tag, axis.name()),
                axis.name(),
                ind,
                &groups,
            );
            io::write_text(&dir.join(format!("boxplot_{}.svg", ind.to_lowercase())), &svg)?;
        }
        for s in &stats {
            self.note(format!(
                "[{}/sweep/{}] {} = {} {} median {:.4} (q1 {:.4}, q3 {:.4})",
                plan.tag,
                axis.name(),
                axis.name(),
                s.value,
                s.indicator,
                s.median,
                s.q1,
                s.q3
            ));
        }
        Ok(dir)
    }
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, force: bool) -> Result<Self> {
        cfg.validate()?;
        let cache = Cache::open(&cfg.out_dir, force)?;
        let workers = cfg.worker_count();
        Ok(Pipeline {
            ctx: Context {
                cfg,
                workers,
                progress: false,
            },
            cache,
        })
    }

    /// Prints per-stage progress to stderr.
    pub fn with_progress(mut self, on: bool) -> Self {
        self.ctx.progress = on;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.ctx.cfg
    }

    /// Stages visited so far, with whether they ran or were cached.
    pub fn events(&self) -> &[StageEvent] {
        self.cache.events()
    }

    pub fn layout(&self, m: usize, n: usize) -> ScaleLayout {
        ScaleLayout::new(&self.ctx.cfg.out_dir, m, n)
    }

    fn plans(&self) -> Vec<Plan> {
        self.ctx.cfg.scales.iter().map(|&[m, n]| Plan::new(&self.ctx.cfg, m, n)).collect()
    }

    /// Runs every step in order.
    pub fn run_all(&mut self) -> Result<()> {
        for plan in self.plans() {
            for step in Step::ALL {
                self.step(&plan, step)?;
            }
        }
        Ok(())
    }

    /// Runs one step for every scale; its inputs must already exist.
    pub fn run_step(&mut self, step: Step) -> Result<()> {
        for plan in self.plans() {
            self.step(&plan, step)?;
        }
        Ok(())
    }

    fn step(&mut self, plan: &Plan, step: Step) -> Result<()> {
        match step {
            Step::Gen => self.gen(plan),
            Step::Solve => {
                self.require(&plan.key("gen"), &plan.gen, "instances", plan.layout.index(), Step::Gen)?;
                self.solve(plan)
            }
            Step::Label => {
                self.require(&plan.key("solve"), &plan.solve, "label fronts", plan.layout.dir.join("fronts"), Step::Solve)?;
                self.label(plan)
            }
            Step::Split => {
                self.require(&plan.key("label"), &plan.label, "labels", plan.layout.dataset().join("labels"), Step::Label)?;
                self.split(plan)
            }
            Step::Train => {
                self.require(&plan.key("split"), &plan.split, "dataset split", plan.layout.split(), Step::Split)?;
                for v in self.ctx.cfg.variants.clone() {
                    self.train(plan, v)?;
                }
                Ok(())
            }
            Step::Predict => {
                for v in self.ctx.cfg.variants.clone() {
                    self.require(&plan.vkey("train", v), &plan.train[&v], "trained checkpoint", plan.layout.checkpoint(v), Step::Train)?;
                    self.predict(plan, v)?;
                }
                Ok(())
            }
            Step::Eval => {
                for v in self.ctx.cfg.variants.clone() {
                    self.require_predictions(plan, v)?;
                    self.eval(plan, v)?;
                }
                Ok(())
            }
            Step::Compare => {
                for v in self.ctx.cfg.variants.clone() {
                    self.require_predictions(plan, v)?;
                }
                self.compare(plan)
            }
        }
    }

    fn require_predictions(&self, plan: &Plan, v: FeatureVariant) -> Result<()> {
        self.require(
            &plan.vkey("predict", v),
            &plan.predict[&v],
            "model predictions",
            plan.layout.prediction_timing(v),
            Step::Predict,
        )
    }

    /// Checks that stage `key` was built from the current configuration and
    /// that its artifacts exist.
    fn require(&self, key: &str, hash: &str, what: &str, path: PathBuf, producer: Step) -> Result<()> {
        let hint = format!("moflp {}", producer.verb());
        match self.cache.manifest().stages.get(key) {
            Some(r) if r.hash != hash => Err(Error::StaleInput {
                stage: key.to_string(),
                hint: format!("{hint} --force"),
            }),
            Some(r) if r.artifacts.iter().all(|a| self.ctx.cfg.out_dir.join(a).exists()) => Ok(()),
            _ => Err(Error::MissingArtifact {
                what: what.to_string(),
                path,
                hint,
            }),
        }
    }

    fn gen(&mut self, plan: &Plan) -> Result<()> {
        let gcfg = self.ctx.cfg.gen_config(plan.m, plan.n);
        let count = self.ctx.cfg.instances as u64;
        let workers = self.ctx.workers;
        let layout = plan.layout.clone();
        self.ctx.note(format!("[{}] generating {count} instances", plan.key("gen")));
        self.cache.run(&plan.key("gen"), &plan.gen, Some(gcfg.seed), || {
            let index: Vec<u64> = (0..count).collect();
            let written = par_map(&index, workers, |_, &k| {
                let inst = generate_indexed(&gcfg, k)?;
                let path = layout.instance(&inst.id);
                io::write_instance(&path, &inst)?;
                Ok((inst.id, path))
            })?;
            let (ids, mut paths): (Vec<String>, Vec<PathBuf>) = written.into_iter().unzip();
            paths.push(write_json(
                &layout.index(),
                &IndexDoc {
                    schema_version: SCHEMA_VERSION,
                    ids,
                },
            )?);
            Ok(paths)
        })
    }

    fn solve(&mut self, plan: &Plan) -> Result<()> {
        let ids = self.ctx.ids(plan)?;
        let cfg = self.ctx.cfg.clone();
        let workers = self.ctx.workers;
        let layout = plan.layout.clone();
        self.ctx.note(format!("[{}] NSGA-II label fronts for {} instances", plan.key("solve"), ids.len()));
        self.cache.run(&plan.key("solve"), &plan.solve, Some(cfg.stage_seed(Stage::Solve)), || {
            par_map(&ids, workers, |k, id| {
                let inst = io::read_instance(&layout.instance(id))?;
                let run = nsga2_run(&inst, &cfg.label_params(k as u64))?;
                let path = layout.front(id);
                io::write_pareto(&path, &run.front)?;
                Ok(path)
            })
        })
    }

    fn label(&mut self, plan: &Plan) -> Result<()> {
        let ids = self.ctx.ids(plan)?;
        let workers = self.ctx.workers;
        let layout = plan.layout.clone();
        self.cache.run(&plan.key("label"), &plan.label, None, || {
            par_map(&ids, workers, |_, id| {
                let inst = io::read_instance(&layout.instance(id))?;
                let front = io::read_pareto(&layout.front(id))?;
                let labels = derive_labels(&front, inst.m(), inst.n())?;
                let path = layout.labels(id);
                io::write_text(&path, &io::encode_labels(id, &labels))?;
                Ok(path)
            })
        })
    }

    fn split(&mut self, plan: &Plan) -> Result<()> {
        let ids = self.ctx.ids(plan)?;
        let seed = self.ctx.cfg.stage_seed(Stage::Split);
        let fractions = self.ctx.cfg.split_fractions;
        let workers = self.ctx.workers;
        let layout = plan.layout.clone();
        self.cache.run(&plan.key("split"), &plan.split, Some(seed), || {
            let pairs = par_map(&ids, workers, |_, id| {
                Ok((io::read_instance(&layout.instance(id))?, io::read_pareto(&layout.front(id))?))
            })?;
            let (train, val, test) = build_dataset(pairs, fractions, seed)?;
            let names = |d: &moflp_core::dataset::Dataset| d.entries.iter().map(|e| e.instance.id.clone()).collect();
            let doc = SplitDoc {
                schema_version: SCHEMA_VERSION,
                train: names(&train),
                val: names(&val),
                test: names(&test),
            };
            Ok(vec![write_json(&layout.split(), &doc)?])
        })
    }

    fn train(&mut self, plan: &Plan, v: FeatureVariant) -> Result<()> {
        let key = plan.vkey("train", v);
        let model = self.ctx.cfg.model_config(v);
        let dir = plan.layout.model_dir(v);
        let seed = model.seed;
        self.cache.run(&key, &plan.train[&v], Some(seed), || self.ctx.fit(plan, &model, &key, &dir))
    }

    fn predict(&mut self, plan: &Plan, v: FeatureVariant) -> Result<()> {
        let key = plan.vkey("predict", v);
        let seed = self.ctx.cfg.stage_seed(Stage::Predict);
        let out = self.cache.run(&key, &plan.predict[&v], Some(seed), || {
            let tests = self.ctx.test_set(plan)?;
            let (node, edge) = self.ctx.load_models(&plan.layout.checkpoint(v))?;
            self.ctx.note(format!("[{key}] sampling {} test instances", tests.ids.len()));
            let written = self.ctx.sample_fronts(&tests, plan, &node, &edge, |id| plan.layout.prediction(v, id))?;
            let timing: Vec<TimingRecord> = tests
                .ids
                .iter()
                .zip(&written)
                .map(|(id, (_, secs))| TimingRecord {
                    scale: plan.tag.clone(),
                    instance_id: id.clone(),
                    method: model_method(v),
                    seconds: *secs,
                })
                .collect();
            let mut paths: Vec<PathBuf> = written.into_iter().map(|(p, _)| p).collect();
            paths.push(report::write_csv(&plan.layout.prediction_timing(v), &timing)?);
            Ok(paths)
        });
        out
    }

    fn eval(&mut self, plan: &Plan, v: FeatureVariant) -> Result<()> {
        let key = plan.vkey("eval", v);
        let out = self.cache.run(&key, &plan.eval[&v], None, || {
            let tests = self.ctx.test_set(plan)?;
            let records = par_map(&tests.ids, self.ctx.workers, |_, id| {
                let label = io::read_pareto(&plan.layout.front(id))?;
                let model = io::read_pareto(&plan.layout.prediction(v, id))?;
                let (label_pts, model_pts) = (label.points(), model.points());
                let (frame, reference) = frame_of(&[&label_pts, &model_pts])?;
                let got = indicators(&frame, &reference, &model_pts)?;
                Ok(EvalRecord {
                    scale: plan.tag.clone(),
                    variant: v.tag().to_string(),
                    instance_id: id.clone(),
                    hv_model: got.hv,
                    igd_model: got.igd,
                    hv_label: frame.hypervolume(&label_pts),
                    model_front_size: model.len(),
                    label_front_size: label.len(),
                })
            })?;
            let count = records.len() as f64;
            self.ctx.note(format!(
                "[{key}] mean HV model {:.4} label {:.4}",
                records.iter().map(|r| r.hv_model).sum::<f64>() / count,
                records.iter().map(|r| r.hv_label).sum::<f64>() / count
            ));
            Ok(vec![report::write_csv(&plan.layout.eval(v), &records)?])
        });
        out
    }

    fn compare(&mut self, plan: &Plan) -> Result<()> {
        let key = plan.key("compare");
        let seed = self.ctx.cfg.stage_seed(Stage::Compare);
        self.cache.run(&key, &plan.compare, Some(seed), || self.ctx.compare_body(plan, seed))
    }

    /// Trains one model per value of `axis` on the current split and writes
    /// per-instance indicators, box plot statistics and plots. Returns the
    /// sweep directory of each scale.
    pub fn sweep(&mut self, axis: SweepAxis, values: Option<Vec<usize>>) -> Result<Vec<PathBuf>> {
        let values = values.unwrap_or_else(|| self.ctx.cfg.sweep.values(axis).to_vec());
        if values.is_empty() {
            return Err(Error::Config(format!("no values to sweep over {}", axis.name())));
        }
        let variant = self.ctx.cfg.sweep.variant;
        let models: Vec<ModelConfig> = values
            .iter()
            .map(|&value| {
                let mut model = self.ctx.cfg.model_config(variant);
                match axis {
                    SweepAxis::LGcn => model.l_gcn = value,
                    SweepAxis::Hidden => model.hidden = value,
                }
                model.validate().map_err(|e| {
                    Error::Config(format!("{} = {value} is not a valid model: {e}", axis.name()))
                })?;
                Ok(model)
            })
            .collect::<Result<_>>()?;
        let mut dirs = Vec::new();
        for plan in self.plans() {
            self.require(&plan.key("split"), &plan.split, "dataset split", plan.layout.split(), Step::Split)?;
            for (&value, model) in values.iter().zip(&models) {
                let key = plan.key(&format!("sweep/{}/{value}", axis.name()));
                let hash = stage_hash(
                    "sweep",
                    &(model, self.ctx.cfg.train_config(), &self.ctx.cfg.sampling, self.ctx.cfg.stage_seed(Stage::Predict)),
                    &[&plan.split],
                );
                let dir = plan.layout.sweep_value(axis, value);
                let out = self.cache.run(&key, &hash, Some(model.seed), || {
                    let mut written = self.ctx.fit(&plan, model, &key, &dir)?;
                    let (node, edge) = self.ctx.load_models(&dir.join("checkpoint.json"))?;
                    let tests = self.ctx.test_set(&plan)?;
                    let fronts = self.ctx.sample_fronts(&tests, &plan, &node, &edge, |id| {
                        dir.join("fronts").join(format!("{id}.json"))
                    })?;
                    written.extend(fronts.into_iter().map(|(p, _)| p));
                    Ok(written)
                });
                out?;
            }
            dirs.push(self.ctx.sweep_report(&plan, axis, &values)?);
        }
        Ok(dirs)
    }
}

/// Normalisation frame spanned by the non-dominated union of `fronts`, and
/// that union as the IGD reference.
fn frame_of(fronts: &[&[ObjectivePoint]]) -> Result<(NormalizationFrame, Vec<ObjectivePoint>)> {
    let union: Vec<ObjectivePoint> = fronts.iter().flat_map(|f| f.iter().copied()).collect();
    let reference: Vec<ObjectivePoint> = nondominated_indices(&union).into_iter().map(|k| union[k]).collect();
    Ok((make_frame(&reference)?, reference))
}
