//! Mini-batch training of the node and edge networks.

use serde::{Deserialize, Serialize};

use moflp_core::dataset::{batch_iter, Entry, GraphFeatures, LabelPair};
use moflp_core::rng::mix_seed;

use crate::error::{Error, Result};
use crate::model::{GraphBatch, HeadKind, ModelConfig, Network, Targets};
use crate::nn::{AdamState, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Seeds the per-epoch shuffles; initialisation uses the model seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 20,
            learning_rate: 1e-3,
            epochs: 300,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Losses after one epoch. Training losses are batch-size weighted means of
/// the training-mode losses seen during the epoch; validation losses are
/// eval-mode losses after it, absent when there is no validation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss_node: f64,
    pub train_loss_edge: f64,
    pub val_loss_node: Option<f64>,
    pub val_loss_edge: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub node: Network,
    pub edge: Network,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 means the initialisation).
    pub best_epoch_node: usize,
    pub best_epoch_edge: usize,
}

struct Example<'a> {
    features: &'a GraphFeatures,
    labels: &'a LabelPair,
}

fn examples<'a>(entries: &'a [Entry], config: &ModelConfig) -> Vec<Example<'a>> {
    entries
        .iter()
        .map(|e| Example {
            features: e.features(config.variant),
            labels: &e.labels,
        })
        .collect()
}

fn stack(examples: &[Example<'_>], index: &[usize]) -> Result<(GraphBatch, Targets)> {
    let feats: Vec<&GraphFeatures> = index.iter().map(|&k| examples[k].features).collect();
    let labels: Vec<&LabelPair> = index.iter().map(|&k| examples[k].labels).collect();
    Ok((GraphBatch::new(&feats)?, Targets::new(&labels)))
}

struct Learner {
    net: Network,
    adam: AdamState,
    best: Option<(f64, usize, Network)>,
}

impl Learner {
    fn new(config: &ModelConfig, kind: HeadKind, lr: f64) -> Result<Self> {
        let net = Network::new(config, kind)?;
        let adam = AdamState::new(lr, &net.trainable_lengths());
        Ok(Learner { net, adam, best: None })
    }

    fn step(&mut self, batch: &GraphBatch, targets: &Targets, epoch: usize, batch_no: usize) -> Result<f64> {
        let diverged = || Error::Diverged {
            network: self.net.kind.name(),
            epoch,
            batch: batch_no,
        };
        let (loss, grad, tape) = match self.net.loss_and_grad(batch, targets) {
            Err(Error::NonFinite(_)) => return Err(diverged()),
            other => other?,
        };
        if !loss.is_finite() {
            return Err(diverged());
        }
        self.net.update_running(&tape);
        let grads: Vec<&[f64]> = grad.tensors().into_iter().filter(|t| t.trainable).map(|t| t.data).collect();
        let mut params: Vec<&mut [f64]> =
            self.net.tensors_mut().into_iter().filter(|t| t.trainable).map(|t| t.data).collect();
        self.adam.step(&mut params, &grads)?;
        Ok(loss)
    }

    fn eval_loss(&self, examples: &[Example<'_>], batch_size: usize) -> Result<f64> {
        let mut total = 0.0;
        let index: Vec<usize> = (0..examples.len()).collect();
        for chunk in index.chunks(batch_size) {
            let (batch, targets) = stack(examples, chunk)?;
            let tape = self.net.forward(&batch, Mode::Eval)?;
            total += self.net.loss(&tape, &targets)?.0 * chunk.len() as f64;
        }
        Ok(total / examples.len() as f64)
    }

    fn consider(&mut self, val: Option<f64>, epoch: usize) {
        if let Some(v) = val {
            if self.best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                self.best = Some((v, epoch, self.net.clone()));
            }
        }
    }

    fn finish(self, last_epoch: usize) -> (Network, usize) {
        match self.best {
            Some((_, epoch, net)) => (net, epoch),
            None => (self.net, last_epoch),
        }
    }
}

pub fn train(train_set: &[Entry], val_set: &[Entry], model: &ModelConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(train_set, val_set, model, config, |_| {})
}

/// [`train`] with a callback after every epoch.
///
/// The networks are trained independently with their own Adam states. For
/// each network the parameters with the lowest validation loss are returned,
/// or the final parameters when there is no validation set.
pub fn train_with_progress(
    train_set: &[Entry],
    val_set: &[Entry],
    model: &ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model.validate()?;
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let scale = train_set[0].scale();
    if let Some(e) = train_set.iter().chain(val_set).find(|e| e.scale() != scale) {
        return Err(Error::Shape(format!(
            "instance {} has scale {:?}, training scale is {scale:?}",
            e.instance.id,
            e.scale()
        )));
    }
    let train_ex = examples(train_set, model);
    let val_ex = examples(val_set, model);
    let mut node = Learner::new(model, HeadKind::Node, config.learning_rate)?;
    let mut edge = Learner::new(model, HeadKind::Edge, config.learning_rate)?;
    if !val_ex.is_empty() {
        node.consider(Some(node.eval_loss(&val_ex, config.batch_size)?), 0);
        edge.consider(Some(edge.eval_loss(&val_ex, config.batch_size)?), 0);
    }

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batches = batch_iter(train_ex.len(), config.batch_size, mix_seed(config.seed, epoch as u64))?;
        let (mut sum_node, mut sum_edge) = (0.0, 0.0);
        for (b, index) in batches.iter().enumerate() {
            let (batch, targets) = stack(&train_ex, index)?;
            let w = index.len() as f64;
            sum_node += node.step(&batch, &targets, epoch, b)? * w;
            sum_edge += edge.step(&batch, &targets, epoch, b)? * w;
        }
        let (val_node, val_edge) = if val_ex.is_empty() {
            (None, None)
        } else {
            (
                Some(node.eval_loss(&val_ex, config.batch_size)?),
                Some(edge.eval_loss(&val_ex, config.batch_size)?),
            )
        };
        node.consider(val_node, epoch);
        edge.consider(val_edge, epoch);
        let record = EpochRecord {
            epoch,
            train_loss_node: sum_node / train_ex.len() as f64,
            train_loss_edge: sum_edge / train_ex.len() as f64,
            val_loss_node: val_node,
            val_loss_edge: val_edge,
        };
        on_epoch(&record);
        history.push(record);
    }
    let (node, best_epoch_node) = node.finish(config.epochs);
    let (edge, best_epoch_edge) = edge.finish(config.epochs);
    Ok(TrainOutcome {
        node,
        edge,
        history,
        best_epoch_node,
        best_epoch_edge,
    })
}
