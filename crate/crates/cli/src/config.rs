//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use moflp_core::dataset::{split_sizes, FeatureVariant};
use moflp_core::generator::GenConfig;
use moflp_core::moea::{MoeaParams, StallRule};
use moflp_core::rng::mix_seed;
use moflp_core::sampler::SampleConfig;
use moflp_gcn::{ModelConfig, TrainConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every derived seed.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// `[m, n]` pairs; each scale gets its own dataset and models.
    pub scales: Vec<[usize; 2]>,
    /// Instances generated per scale.
    pub instances: usize,
    /// Train, validation and test fractions.
    pub split_fractions: [f64; 3],
    pub variants: Vec<FeatureVariant>,
    /// Worker threads for per-instance work; 0 uses every available core.
    /// Outputs do not depend on it.
    pub workers: usize,
    /// Value ranges; `m`, `n` and `seed` are filled in per scale.
    pub generator: GenConfig,
    /// NSGA-II settings for the label fronts. The operator settings are
    /// reused by the comparison baseline.
    pub labeling: MoeaParams,
    /// Architecture; `variant` and `seed` are filled in per run.
    pub model: ModelConfig,
    /// Optimiser settings; `seed` is filled in per run.
    pub training: TrainConfig,
    /// Decoding settings; `seed` is filled in per instance.
    pub sampling: SampleConfig,
    pub compare: CompareConfig,
    pub sweep: SweepConfig,
    pub seeds: SeedOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Evaluation budgets at which NSGA-II fronts are recorded.
    pub budgets: Vec<usize>,
    /// Independent NSGA-II runs per test instance.
    pub repeats: usize,
    /// Size of the uniform random baseline.
    pub random_samples: usize,
    /// Test instances that get a front scatter plot.
    pub scatter_instances: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            budgets: vec![10_000, 20_000, 30_000, 40_000, 50_000],
            repeats: 3,
            random_samples: 200,
            scatter_instances: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    LGcn,
    Hidden,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::LGcn => "l_gcn",
            SweepAxis::Hidden => "hidden",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l_gcn" | "l-gcn" | "layers" => Ok(SweepAxis::LGcn),
            "hidden" => Ok(SweepAxis::Hidden),
            other => Err(Error::Config(format!("unknown sweep axis `{other}` (expected l_gcn or hidden)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub l_gcn: Vec<usize>,
    pub hidden: Vec<usize>,
    /// Feature variant of the swept models.
    pub variant: FeatureVariant,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            l_gcn: vec![1, 2, 3, 4],
            hidden: vec![32, 64, 128],
            variant: FeatureVariant::A,
        }
    }
}

impl SweepConfig {
    pub fn values(&self, axis: SweepAxis) -> &[usize] {
        match axis {
            SweepAxis::LGcn => &self.l_gcn,
            SweepAxis::Hidden => &self.hidden,
        }
    }
}

/// Explicit per-stage seeds; a missing entry is derived from the root seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedOverrides {
    pub generate: Option<u64>,
    pub solve: Option<u64>,
    pub split: Option<u64>,
    pub train: Option<u64>,
    pub predict: Option<u64>,
    pub compare: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Solve,
    Split,
    Train,
    Predict,
    Compare,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            scales: vec![[20, 50]],
            instances: 1000,
            split_fractions: [0.7, 0.2, 0.1],
            variants: vec![FeatureVariant::A, FeatureVariant::B],
            workers: 0,
            generator: GenConfig::default(),
            labeling: MoeaParams {
                max_evaluations: 100_000,
                stall: Some(StallRule::default()),
                ..MoeaParams::default()
            },
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            sampling: SampleConfig::default(),
            compare: CompareConfig::default(),
            sweep: SweepConfig::default(),
            seeds: SeedOverrides::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Config("at least one scale is required".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one feature variant is required".into()));
        }
        let [train, _, test] = split_sizes(self.instances, self.split_fractions)?;
        if train == 0 || test == 0 {
            return Err(Error::Config(format!(
                "{} instances split as {:?} leave no training or no test instances",
                self.instances, self.split_fractions
            )));
        }
        for &[m, n] in &self.scales {
            self.gen_config(m, n).validate()?;
        }
        self.labeling.validate()?;
        for variant in &self.variants {
            self.model_config(*variant).validate()?;
        }
        self.training.validate()?;
        if self.sampling.sample_count == 0 {
            return Err(Error::Config("sampling.sample_count must be at least 1".into()));
        }
        let c = &self.compare;
        if c.budgets.is_empty() || c.repeats == 0 || c.random_samples == 0 {
            return Err(Error::Config("compare needs budgets, at least one repeat and a random sample size".into()));
        }
        self.baseline_params(0)?;
        Ok(())
    }

    /// Seed of a pipeline stage: the explicit override or a value derived
    /// from the root seed.
    pub fn stage_seed(&self, stage: Stage) -> u64 {
        let (explicit, salt) = match stage {
            Stage::Generate => (self.seeds.generate, 1),
            Stage::Solve => (self.seeds.solve, 2),
            Stage::Split => (self.seeds.split, 3),
            Stage::Train => (self.seeds.train, 4),
            Stage::Predict => (self.seeds.predict, 5),
            Stage::Compare => (self.seeds.compare, 6),
        };
        explicit.unwrap_or_else(|| mix_seed(self.seed, salt))
    }

    pub fn gen_config(&self, m: usize, n: usize) -> GenConfig {
        GenConfig {
            m,
            n,
            seed: self.stage_seed(Stage::Generate),
            ..self.generator.clone()
        }
    }

    pub fn model_config(&self, variant: FeatureVariant) -> ModelConfig {
        ModelConfig {
            variant,
            seed: self.stage_seed(Stage::Train),
            ..self.model.clone()
        }
    }

    pub fn worker_count(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            w => w,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: mix_seed(self.stage_seed(Stage::Train), 1),
            ..self.training.clone()
        }
    }

    /// Label-front NSGA-II settings for instance `index`.
    pub fn label_params(&self, index: u64) -> MoeaParams {
        MoeaParams {
            seed: mix_seed(self.stage_seed(Stage::Solve), index),
            checkpoint_budgets: Vec::new(),
            ..self.labeling.clone()
        }
    }

    /// Baseline NSGA-II settings for one repeat, recording every budget.
    pub fn baseline_params(&self, seed: u64) -> Result<MoeaParams> {
        let mut budgets = self.compare.budgets.clone();
        budgets.sort_unstable();
        budgets.dedup();
        let params = MoeaParams {
            max_evaluations: *budgets.last().expect("budgets validated non-empty"),
            checkpoint_budgets: budgets,
            stall: None,
            seed,
            ..self.labeling.clone()
        };
        params.validate()?;
        Ok(params)
    }
}

/// Command-line overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub scales: Vec<[usize; 2]>,
    pub variants: Vec<FeatureVariant>,
    pub budgets: Vec<usize>,
    pub samples: Option<usize>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        if !self.scales.is_empty() {
            cfg.scales = self.scales.clone();
        }
        if !self.variants.is_empty() {
            cfg.variants = self.variants.clone();
        }
        if !self.budgets.is_empty() {
            cfg.compare.budgets = self.budgets.clone();
        }
        if let Some(s) = self.samples {
            cfg.sampling.sample_count = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()
    }
}

/// Parses `MxN`, e.g. `10x25`.
pub fn parse_scale(text: &str) -> Result<[usize; 2]> {
    let bad = || Error::Config(format!("scale `{text}` is not of the form MxN"));
    let (m, n) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok([m.trim().parse().map_err(|_| bad())?, n.trim().parse().map_err(|_| bad())?])
}
