//! Embedding block, residual gated graph convolutions and the two MLP heads.
//!
//! A batch stacks `G` graphs of one scale. Node row `g(m+n) + i` is facility
//! `i` of graph `g` and `g(m+n) + m + j` is customer `j`; edge row
//! `g·mn + i·n + j` joins them.

use serde::{Deserialize, Serialize};

use moflp_core::dataset::{extract_features, FeatureVariant, GraphFeatures, LabelPair};
use moflp_core::rng::{self, Rng};
use moflp_core::sampler::Prediction;
use moflp_core::{Instance, Matrix};

use crate::error::{Error, Result};
use crate::nn::{relu, relu_backward, sigmoid, uniform_init, BatchNorm, BnCache, Linear, Mode};
use crate::tensor::{matmul_nt, matmul_tn, mm, Tensor2};

/// Probability floor inside the edge cross-entropy.
pub const CE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub l_gcn: usize,
    pub l_mlp: usize,
    pub variant: FeatureVariant,
    pub gate_delta: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            l_gcn: 3,
            l_mlp: 3,
            variant: FeatureVariant::A,
            gate_delta: 1e-6,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let widest = self.variant.node_width().max(FeatureVariant::EDGE_WIDTH);
        if self.hidden < widest {
            return Err(Error::Config(format!(
                "hidden width {} cannot give each of {widest} features its own block",
                self.hidden
            )));
        }
        if self.l_gcn == 0 || self.l_mlp == 0 {
            return Err(Error::Config("l_gcn and l_mlp must be at least 1".into()));
        }
        if !(self.gate_delta > 0.0 && self.gate_delta.is_finite()) {
            return Err(Error::Config(format!("gate delta must be positive, got {}", self.gate_delta)));
        }
        Ok(())
    }
}

/// Block widths when `hidden` columns are shared among `features` scalar
/// features: equal blocks, with the remainder spread over the first ones.
pub fn block_widths(hidden: usize, features: usize) -> Result<Vec<usize>> {
    if features == 0 || hidden < features {
        return Err(Error::Config(format!("cannot split width {hidden} among {features} features")));
    }
    let (base, extra) = (hidden / features, hidden % features);
    Ok((0..features).map(|k| base + usize::from(k < extra)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Sigmoid probability per facility, trained with MSE.
    Node,
    /// Per-customer softmax over facilities, trained with cross-entropy.
    Edge,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Node => "node",
            HeadKind::Edge => "edge",
        }
    }
}

/// Each scalar feature is mapped by its own `1 -> w_k` affine transform and
/// the blocks are concatenated to width `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    owner: Vec<usize>,
    features: usize,
}

impl Embedding {
    fn new(rng: &mut Rng, hidden: usize, features: usize) -> Result<Self> {
        let owner = block_widths(hidden, features)?
            .into_iter()
            .enumerate()
            .flat_map(|(k, w)| std::iter::repeat_n(k, w))
            .collect();
        Ok(Embedding {
            weight: uniform_init(rng, hidden, 1),
            bias: uniform_init(rng, hidden, 1),
            owner,
            features,
        })
    }

    fn zeros_like(&self) -> Self {
        Embedding {
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
            owner: self.owner.clone(),
            features: self.features,
        }
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.features {
            return Err(Error::Shape(format!("{} feature columns for an embedding of {}", x.cols(), self.features)));
        }
        let h = self.weight.len();
        Ok(Tensor2::from_fn(x.rows(), h, |r, c| x.get(r, self.owner[c]) * self.weight[c] + self.bias[c]))
    }

    fn backward(&self, x: &Tensor2, grad_out: &Tensor2, grad: &mut Embedding) {
        for r in 0..x.rows() {
            let (xr, gr) = (x.row(r), grad_out.row(r));
            for c in 0..self.weight.len() {
                grad.weight[c] += xr[self.owner[c]] * gr[c];
                grad.bias[c] += gr[c];
            }
        }
    }
}

/// One residual gated convolution; `u`, `v` update edges and `p`, `q` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub u: Tensor2,
    pub v: Tensor2,
    pub p: Tensor2,
    pub q: Tensor2,
    pub bn_edge: BatchNorm,
    pub bn_node: BatchNorm,
}

impl ConvLayer {
    fn new(rng: &mut Rng, h: usize) -> Self {
        let mut square = || Tensor2::from_vec(h, h, uniform_init(rng, h * h, h)).unwrap();
        ConvLayer {
            u: square(),
            v: square(),
            p: square(),
            q: square(),
            bn_edge: BatchNorm::new(h),
            bn_node: BatchNorm::new(h),
        }
    }

    fn zeros_like(&self) -> Self {
        let h = self.u.rows();
        ConvLayer {
            u: Tensor2::zeros(h, h),
            v: Tensor2::zeros(h, h),
            p: Tensor2::zeros(h, h),
            q: Tensor2::zeros(h, h),
            bn_edge: self.bn_edge.zeros_like(),
            bn_node: self.bn_node.zeros_like(),
        }
    }
}

/// Graph count and scale of a stacked batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchShape {
    pub graphs: usize,
    pub m: usize,
    pub n: usize,
}

impl BatchShape {
    #[inline]
    fn fac(&self, g: usize, i: usize) -> usize {
        g * (self.m + self.n) + i
    }

    #[inline]
    fn cust(&self, g: usize, j: usize) -> usize {
        g * (self.m + self.n) + self.m + j
    }

    #[inline]
    fn edge(&self, g: usize, i: usize, j: usize) -> usize {
        g * self.m * self.n + i * self.n + j
    }

    fn node_rows(&self) -> usize {
        self.graphs * (self.m + self.n)
    }

    fn edge_rows(&self) -> usize {
        self.graphs * self.m * self.n
    }
}

/// Stacked raw features of same-scale graphs.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub shape: BatchShape,
    pub variant: FeatureVariant,
    pub node: Tensor2,
    pub edge: Tensor2,
}

impl GraphBatch {
    pub fn new(graphs: &[&GraphFeatures]) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::Shape("a batch needs at least one graph".into()))?;
        let (m, n, variant) = (first.m, first.n, first.variant);
        if let Some(bad) = graphs.iter().find(|f| (f.m, f.n, f.variant) != (m, n, variant)) {
            return Err(Error::Shape(format!(
                "graph of scale {}x{} (variant {}) in a {m}x{n} batch of variant {}",
                bad.m,
                bad.n,
                bad.variant.tag(),
                variant.tag()
            )));
        }
        let stack = |pick: &dyn Fn(&GraphFeatures) -> &Matrix| {
            let cols = pick(first).cols();
            let data: Vec<f64> = graphs.iter().flat_map(|f| pick(f).as_slice().iter().copied()).collect();
            Tensor2::from_vec(data.len() / cols.max(1), cols, data)
        };
        Ok(GraphBatch {
            shape: BatchShape { graphs: graphs.len(), m, n },
            variant,
            node: stack(&|f| &f.node)?,
            edge: stack(&|f| &f.edge)?,
        })
    }
}

/// Labels of a batch: facility probabilities and edge probabilities in row order.
#[derive(Debug, Clone)]
pub struct Targets {
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
}

impl Targets {
    pub fn new(labels: &[&LabelPair]) -> Self {
        Targets {
            node: labels.iter().flat_map(|l| l.p_node.iter().copied()).collect(),
            edge: labels.iter().flat_map(|l| l.p_edge.as_slice().iter().copied()).collect(),
        }
    }
}

struct LayerTape {
    node_in: Tensor2,
    edge_in: Tensor2,
    pair_sum: Tensor2,
    edge_pre: Tensor2,
    bn_edge: Option<BnCache>,
    gate: Tensor2,
    agg: Tensor2,
    den: Tensor2,
    node_pre: Tensor2,
    bn_node: Option<BnCache>,
}

/// Everything a backward pass needs from the forward pass.
pub struct Tape {
    shape: BatchShape,
    node_features: Tensor2,
    edge_features: Tensor2,
    layers: Vec<LayerTape>,
    mlp_inputs: Vec<Tensor2>,
    mlp_pre: Vec<Tensor2>,
    node_out: Tensor2,
    edge_out: Tensor2,
    /// Sigmoid probabilities per facility row (node head) or softmax
    /// probabilities per edge row (edge head).
    pub output: Vec<f64>,
}

/// One of the two networks: embeddings, `l_gcn` convolutions and an MLP head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kind: HeadKind,
    pub config: ModelConfig,
    pub embed_node: Embedding,
    pub embed_edge: Embedding,
    pub layers: Vec<ConvLayer>,
    pub head: Vec<Linear>,
}

/// A named parameter or buffer with its shape.
pub struct NamedTensor<'a> {
    pub name: String,
    pub shape: [usize; 2],
    pub data: &'a [f64],
    pub trainable: bool,
}

pub struct NamedTensorMut<'a> {
    pub name: String,
    pub shape: [usize; 2],
    pub data: &'a mut [f64],
    pub trainable: bool,
}

impl Network {
    /// Fresh network initialised from `config.seed`; the node and edge
    /// networks draw from different substreams.
    pub fn new(config: &ModelConfig, kind: HeadKind) -> Result<Self> {
        config.validate()?;
        let stream = match kind {
            HeadKind::Node => 1,
            HeadKind::Edge => 2,
        };
        let mut rng = rng::substream(config.seed, stream);
        let h = config.hidden;
        let embed_node = Embedding::new(&mut rng, h, config.variant.node_width())?;
        let embed_edge = Embedding::new(&mut rng, h, FeatureVariant::EDGE_WIDTH)?;
        let layers = (0..config.l_gcn).map(|_| ConvLayer::new(&mut rng, h)).collect();
        let head = (0..config.l_mlp)
            .map(|k| Linear::new(&mut rng, h, if k + 1 == config.l_mlp { 1 } else { h }))
            .collect();
        Ok(Network {
            kind,
            config: config.clone(),
            embed_node,
            embed_edge,
            layers,
            head,
        })
    }

    /// Same shapes with every value zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Network {
            kind: self.kind,
            config: self.config.clone(),
            embed_node: self.embed_node.zeros_like(),
            embed_edge: self.embed_edge.zeros_like(),
            layers: self.layers.iter().map(ConvLayer::zeros_like).collect(),
            head: self.head.iter().map(Linear::zeros_like).collect(),
        }
    }

    /// Parameters followed by batch-norm running statistics, in a fixed order.
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        fn named(name: String, shape: [usize; 2], data: &[f64], trainable: bool) -> NamedTensor<'_> {
            NamedTensor {
                name,
                shape,
                data,
                trainable,
            }
        }
        let h = self.config.hidden;
        let mut out = vec![
            named("embed_node.weight".into(), [1, h], &self.embed_node.weight, true),
            named("embed_node.bias".into(), [1, h], &self.embed_node.bias, true),
            named("embed_edge.weight".into(), [1, h], &self.embed_edge.weight, true),
            named("embed_edge.bias".into(), [1, h], &self.embed_edge.bias, true),
        ];
        let mut stats = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (tag, t) in [("u", &layer.u), ("v", &layer.v), ("p", &layer.p), ("q", &layer.q)] {
                out.push(named(format!("conv{l}.{tag}"), [h, h], t.data(), true));
            }
            for (tag, bn) in [("bn_edge", &layer.bn_edge), ("bn_node", &layer.bn_node)] {
                out.push(named(format!("conv{l}.{tag}.gamma"), [1, h], &bn.gamma, true));
                out.push(named(format!("conv{l}.{tag}.beta"), [1, h], &bn.beta, true));
                stats.push(named(format!("conv{l}.{tag}.running_mean"), [1, h], &bn.running_mean, false));
                stats.push(named(format!("conv{l}.{tag}.running_var"), [1, h], &bn.running_var, false));
            }
        }
        for (k, lin) in self.head.iter().enumerate() {
            out.push(named(format!("head{k}.weight"), [lin.weight.rows(), lin.weight.cols()], lin.weight.data(), true));
            out.push(named(format!("head{k}.bias"), [1, lin.bias.len()], &lin.bias, true));
        }
        out.extend(stats);
        out
    }

    /// Mutable view of [`Self::tensors`] in the same order.
    pub fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let h = self.config.hidden;
        let mut out: Vec<NamedTensorMut<'_>> = Vec::new();
        let Network {
            embed_node,
            embed_edge,
            layers,
            head,
            ..
        } = self;
        let mut stats = Vec::new();
        out.push(nt("embed_node.weight".into(), [1, h], &mut embed_node.weight, true));
        out.push(nt("embed_node.bias".into(), [1, h], &mut embed_node.bias, true));
        out.push(nt("embed_edge.weight".into(), [1, h], &mut embed_edge.weight, true));
        out.push(nt("embed_edge.bias".into(), [1, h], &mut embed_edge.bias, true));
        for (l, layer) in layers.iter_mut().enumerate() {
            let ConvLayer {
                u,
                v,
                p,
                q,
                bn_edge,
                bn_node,
            } = layer;
            for (tag, t) in [("u", u), ("v", v), ("p", p), ("q", q)] {
                out.push(nt(format!("conv{l}.{tag}"), [h, h], t.data_mut(), true));
            }
            for (tag, bn) in [("bn_edge", bn_edge), ("bn_node", bn_node)] {
                let BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } = bn;
                out.push(nt(format!("conv{l}.{tag}.gamma"), [1, h], gamma, true));
                out.push(nt(format!("conv{l}.{tag}.beta"), [1, h], beta, true));
                stats.push(nt(format!("conv{l}.{tag}.running_mean"), [1, h], running_mean, false));
                stats.push(nt(format!("conv{l}.{tag}.running_var"), [1, h], running_var, false));
            }
        }
        for (k, lin) in head.iter_mut().enumerate() {
            let shape = [lin.weight.rows(), lin.weight.cols()];
            let len = lin.bias.len();
            out.push(nt(format!("head{k}.weight"), shape, lin.weight.data_mut(), true));
            out.push(nt(format!("head{k}.bias"), [1, len], &mut lin.bias, true));
        }
        out.extend(stats);
        out
    }

    /// Concatenated trainable parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .filter(|t| t.trainable)
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    /// Inverse of [`Self::flat_params`].
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        for t in self.tensors_mut().into_iter().filter(|t| t.trainable) {
            let end = offset + t.data.len();
            let src = flat
                .get(offset..end)
                .ok_or_else(|| Error::Shape(format!("flat parameter vector too short at {}", t.name)))?;
            t.data.copy_from_slice(src);
            offset = end;
        }
        if offset != flat.len() {
            return Err(Error::Shape(format!("{} parameters given, {offset} expected", flat.len())));
        }
        Ok(())
    }

    pub fn trainable_lengths(&self) -> Vec<usize> {
        self.tensors().into_iter().filter(|t| t.trainable).map(|t| t.data.len()).collect()
    }

    pub fn forward(&self, batch: &GraphBatch, mode: Mode) -> Result<Tape> {
        if batch.variant != self.config.variant {
            return Err(Error::Config(format!(
                "features of variant {} given to a network trained on variant {}",
                batch.variant.tag(),
                self.config.variant.tag()
            )));
        }
        let shape = batch.shape;
        let mut node = self.embed_node.forward(&batch.node)?;
        let mut edge = self.embed_edge.forward(&batch.edge)?;
        if node.rows() != shape.node_rows() || edge.rows() != shape.edge_rows() {
            return Err(Error::Shape("feature rows do not match the batch scale".into()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (n2, e2, tape) = self.conv_forward(layer, &shape, node, edge, mode)?;
            node = n2;
            edge = e2;
            layers.push(tape);
        }
        let x0 = match self.kind {
            HeadKind::Node => {
                let rows: Vec<usize> = (0..shape.graphs)
                    .flat_map(|g| (0..shape.m).map(move |i| shape.fac(g, i)))
                    .collect();
                node.gather_rows(&rows)
            }
            HeadKind::Edge => edge.clone(),
        };
        let mut mlp_inputs = vec![x0];
        let mut mlp_pre = Vec::with_capacity(self.head.len());
        for (k, lin) in self.head.iter().enumerate() {
            let a = lin.forward(&mlp_inputs[k])?;
            if k + 1 < self.head.len() {
                mlp_inputs.push(relu(&a));
            }
            mlp_pre.push(a);
        }
        let logits = mlp_pre.last().expect("l_mlp >= 1").data();
        let output = match self.kind {
            HeadKind::Node => logits.iter().map(|&a| sigmoid(a)).collect(),
            HeadKind::Edge => softmax_per_customer(&shape, logits),
        };
        if output.iter().any(|p: &f64| !p.is_finite()) {
            return Err(Error::NonFinite(format!("{} head output", self.kind.name())));
        }
        Ok(Tape {
            shape,
            node_features: batch.node.clone(),
            edge_features: batch.edge.clone(),
            layers,
            mlp_inputs,
            mlp_pre,
            node_out: node,
            edge_out: edge,
            output,
        })
    }

    fn conv_forward(
        &self,
        layer: &ConvLayer,
        s: &BatchShape,
        node: Tensor2,
        edge: Tensor2,
        mode: Mode,
    ) -> Result<(Tensor2, Tensor2, LayerTape)> {
        let h = self.config.hidden;
        let delta = self.config.gate_delta;

        let mut pair_sum = Tensor2::zeros(s.edge_rows(), h);
        for g in 0..s.graphs {
            for i in 0..s.m {
                let nf = node.row(s.fac(g, i));
                for j in 0..s.n {
                    let nc = node.row(s.cust(g, j));
                    for ((o, a), b) in pair_sum.row_mut(s.edge(g, i, j)).iter_mut().zip(nf).zip(nc) {
                        *o = a + b;
                    }
                }
            }
        }
        let mut edge_pre = mm(&edge, &layer.u);
        edge_pre.add_assign(&mm(&pair_sum, &layer.v));
        let (edge_bn, bn_edge) = layer.bn_edge.forward(&edge_pre, mode)?;
        let mut edge_out = relu(&edge_bn);
        edge_out.add_assign(&edge);

        let gate = edge.map(sigmoid);
        let mut agg = Tensor2::zeros(s.node_rows(), h);
        let mut den = Tensor2::from_fn(s.node_rows(), h, |_, _| delta);
        for g in 0..s.graphs {
            for i in 0..s.m {
                for j in 0..s.n {
                    let e = s.edge(g, i, j);
                    let (f, c) = (s.fac(g, i), s.cust(g, j));
                    let w = gate.row(e);
                    for (k, &wk) in w.iter().enumerate().take(h) {
                        agg.row_mut(f)[k] += wk * node.get(c, k);
                        agg.row_mut(c)[k] += wk * node.get(f, k);
                        den.row_mut(f)[k] += wk;
                        den.row_mut(c)[k] += wk;
                    }
                }
            }
        }
        for (a, d) in agg.data_mut().iter_mut().zip(den.data()) {
            *a /= d;
        }
        let mut node_pre = mm(&node, &layer.p);
        node_pre.add_assign(&mm(&agg, &layer.q));
        let (node_bn, bn_node) = layer.bn_node.forward(&node_pre, mode)?;
        let mut node_out = relu(&node_bn);
        node_out.add_assign(&node);

        Ok((
            node_out,
            edge_out,
            LayerTape {
                node_in: node,
                edge_in: edge,
                pair_sum,
                edge_pre: edge_bn,
                bn_edge,
                gate,
                agg,
                den,
                node_pre: node_bn,
                bn_node,
            },
        ))
    }

    /// Loss of a forward pass against `targets` and its gradient with respect
    /// to the head logits.
    pub fn loss(&self, tape: &Tape, targets: &Targets) -> Result<(f64, Vec<f64>)> {
        match self.kind {
            HeadKind::Node => node_loss_grad(&tape.output, &targets.node),
            HeadKind::Edge => edge_loss_grad(&tape.shape, &tape.output, &targets.edge),
        }
    }

    /// Gradient of the loss with respect to every trainable parameter, given
    /// the logit gradient. Requires a training-mode tape.
    pub fn backward(&self, tape: &Tape, logit_grad: &[f64]) -> Result<Network> {
        let s = tape.shape;
        let h = self.config.hidden;
        let mut grad = self.zeros_like();
        let mut g = Tensor2::from_vec(logit_grad.len(), 1, logit_grad.to_vec())?;
        for k in (0..self.head.len()).rev() {
            let dx = self.head[k].backward(&tape.mlp_inputs[k], &g, &mut grad.head[k]);
            g = if k > 0 { relu_backward(&tape.mlp_pre[k - 1], &dx) } else { dx };
        }
        let mut d_node = Tensor2::zeros(tape.node_out.rows(), h);
        let mut d_edge = Tensor2::zeros(tape.edge_out.rows(), h);
        match self.kind {
            HeadKind::Node => {
                let mut r = 0;
                for gi in 0..s.graphs {
                    for i in 0..s.m {
                        d_node.row_mut(s.fac(gi, i)).copy_from_slice(g.row(r));
                        r += 1;
                    }
                }
            }
            HeadKind::Edge => d_edge = g,
        }
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (dn, de) = self.conv_backward(layer, &tape.layers[l], &s, d_node, d_edge, &mut grad.layers[l])?;
            d_node = dn;
            d_edge = de;
        }
        self.embed_node.backward(&tape.node_features, &d_node, &mut grad.embed_node);
        self.embed_edge.backward(&tape.edge_features, &d_edge, &mut grad.embed_edge);
        Ok(grad)
    }

    fn conv_backward(
        &self,
        layer: &ConvLayer,
        t: &LayerTape,
        s: &BatchShape,
        d_node_out: Tensor2,
        d_edge_out: Tensor2,
        grad: &mut ConvLayer,
    ) -> Result<(Tensor2, Tensor2)> {
        let h = self.config.hidden;
        let missing = || Error::Config("backward pass needs a training-mode forward pass".into());

        // node path
        let d_node_bn = relu_backward(&t.node_pre, &d_node_out);
        let d_node_pre = layer
            .bn_node
            .backward(t.bn_node.as_ref().ok_or_else(missing)?, &d_node_bn, &mut grad.bn_node);
        grad.p.add_assign(&matmul_tn(&t.node_in, &d_node_pre));
        grad.q.add_assign(&matmul_tn(&t.agg, &d_node_pre));
        let mut d_node = d_node_out;
        d_node.add_assign(&matmul_nt(&d_node_pre, &layer.p));
        let d_agg = matmul_nt(&d_node_pre, &layer.q);

        // agg = num / den
        let mut d_num = d_agg.clone();
        let mut d_den = d_agg;
        for ((dn, dd), (a, d)) in d_num
            .data_mut()
            .iter_mut()
            .zip(d_den.data_mut())
            .zip(t.agg.data().iter().zip(t.den.data()))
        {
            *dn /= d;
            *dd = -*dd * a / d;
        }
        let mut d_gate = Tensor2::zeros(t.gate.rows(), h);
        for g in 0..s.graphs {
            for i in 0..s.m {
                for j in 0..s.n {
                    let e = s.edge(g, i, j);
                    let (f, c) = (s.fac(g, i), s.cust(g, j));
                    for k in 0..h {
                        let w = t.gate.get(e, k);
                        let dnf = d_num.get(f, k);
                        let dnc = d_num.get(c, k);
                        let dg = dnf * t.node_in.get(c, k) + d_den.get(f, k) + dnc * t.node_in.get(f, k) + d_den.get(c, k);
                        d_gate.row_mut(e)[k] = dg;
                        d_node.row_mut(c)[k] += dnf * w;
                        d_node.row_mut(f)[k] += dnc * w;
                    }
                }
            }
        }

        // edge path
        let d_edge_bn = relu_backward(&t.edge_pre, &d_edge_out);
        let d_edge_pre = layer
            .bn_edge
            .backward(t.bn_edge.as_ref().ok_or_else(missing)?, &d_edge_bn, &mut grad.bn_edge);
        grad.u.add_assign(&matmul_tn(&t.edge_in, &d_edge_pre));
        grad.v.add_assign(&matmul_tn(&t.pair_sum, &d_edge_pre));
        let mut d_edge = d_edge_out;
        d_edge.add_assign(&matmul_nt(&d_edge_pre, &layer.u));
        for ((de, dg), w) in d_edge.data_mut().iter_mut().zip(d_gate.data()).zip(t.gate.data()) {
            *de += dg * w * (1.0 - w);
        }
        let d_pair = matmul_nt(&d_edge_pre, &layer.v);
        for g in 0..s.graphs {
            for i in 0..s.m {
                for j in 0..s.n {
                    let e = s.edge(g, i, j);
                    let (f, c) = (s.fac(g, i), s.cust(g, j));
                    for k in 0..h {
                        let v = d_pair.get(e, k);
                        d_node.row_mut(f)[k] += v;
                        d_node.row_mut(c)[k] += v;
                    }
                }
            }
        }
        Ok((d_node, d_edge))
    }

    /// Folds the batch statistics of a training-mode tape into the running
    /// averages.
    pub fn update_running(&mut self, tape: &Tape) {
        for (layer, t) in self.layers.iter_mut().zip(&tape.layers) {
            if let Some(c) = &t.bn_edge {
                layer.bn_edge.update_running(c);
            }
            if let Some(c) = &t.bn_node {
                layer.bn_node.update_running(c);
            }
        }
    }

    /// Training-mode loss and parameter gradient for one batch.
    pub fn loss_and_grad(&self, batch: &GraphBatch, targets: &Targets) -> Result<(f64, Network, Tape)> {
        let tape = self.forward(batch, Mode::Train)?;
        let (loss, dlogit) = self.loss(&tape, targets)?;
        let grad = self.backward(&tape, &dlogit)?;
        Ok((loss, grad, tape))
    }
}

fn nt<'a>(name: String, shape: [usize; 2], data: &'a mut [f64], trainable: bool) -> NamedTensorMut<'a> {
    NamedTensorMut {
        name,
        shape,
        data,
        trainable,
    }
}

fn softmax_per_customer(s: &BatchShape, logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for g in 0..s.graphs {
        for j in 0..s.n {
            let idx = |i: usize| s.edge(g, i, j);
            let max = (0..s.m).map(|i| logits[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for i in 0..s.m {
                let e = (logits[idx(i)] - max).exp();
                out[idx(i)] = e;
                sum += e;
            }
            for i in 0..s.m {
                out[idx(i)] /= sum;
            }
        }
    }
    out
}

fn node_loss_grad(p_hat: &[f64], label: &[f64]) -> Result<(f64, Vec<f64>)> {
    let loss = loss_node(p_hat, label)?;
    let k = 2.0 / p_hat.len() as f64;
    let grad = p_hat.iter().zip(label).map(|(p, y)| k * (p - y) * p * (1.0 - p)).collect();
    Ok((loss, grad))
}

fn edge_loss_grad(s: &BatchShape, p_hat: &[f64], label: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p_hat.len() != label.len() {
        return Err(Error::Shape(format!("{} predicted edges, {} labels", p_hat.len(), label.len())));
    }
    let customers = (s.graphs * s.n) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p_hat.len()];
    for g in 0..s.graphs {
        for j in 0..s.n {
            let idx = |i: usize| s.edge(g, i, j);
            let mut dot = 0.0;
            for i in 0..s.m {
                let (p, y) = (p_hat[idx(i)], label[idx(i)]);
                loss -= y * (p + CE_FLOOR).ln();
                let dp = -y / (p + CE_FLOOR) / customers;
                grad[idx(i)] = dp;
                dot += p * dp;
            }
            for i in 0..s.m {
                grad[idx(i)] = p_hat[idx(i)] * (grad[idx(i)] - dot);
            }
        }
    }
    Ok((loss / customers, grad))
}

/// Mean squared error over facilities.
pub fn loss_node(p_hat: &[f64], label: &[f64]) -> Result<f64> {
    if p_hat.len() != label.len() || p_hat.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} labels", p_hat.len(), label.len())));
    }
    Ok(p_hat.iter().zip(label).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / p_hat.len() as f64)
}

/// Mean over customers of the cross-entropy between label and predicted columns.
pub fn loss_edge(p_hat: &Matrix, label: &Matrix) -> Result<f64> {
    if (p_hat.rows(), p_hat.cols()) != (label.rows(), label.cols()) || p_hat.cols() == 0 {
        return Err(Error::Shape(format!(
            "prediction {}x{} against labels {}x{}",
            p_hat.rows(),
            p_hat.cols(),
            label.rows(),
            label.cols()
        )));
    }
    let mut total = 0.0;
    for j in 0..p_hat.cols() {
        for i in 0..p_hat.rows() {
            total -= label.get(i, j) * (p_hat.get(i, j) + CE_FLOOR).ln();
        }
    }
    Ok(total / p_hat.cols() as f64)
}

/// Eval-mode forward of both networks on one instance.
pub fn predict(instance: &Instance, node_net: &Network, edge_net: &Network) -> Result<Prediction> {
    if node_net.kind != HeadKind::Node || edge_net.kind != HeadKind::Edge {
        return Err(Error::Config("predict expects a node network and an edge network".into()));
    }
    if node_net.config.variant != edge_net.config.variant {
        return Err(Error::Config("node and edge networks use different feature variants".into()));
    }
    let features = extract_features(instance, node_net.config.variant);
    let batch = GraphBatch::new(&[&features])?;
    let p_node = node_net.forward(&batch, Mode::Eval)?.output;
    let edge = edge_net.forward(&batch, Mode::Eval)?.output;
    let p_edge = Matrix::from_fn(instance.m(), instance.n(), |i, j| edge[i * instance.n() + j]);
    Ok(Prediction { p_node, p_edge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use moflp_core::generator::{generate_instance, GenConfig};
    use rand::Rng as _;

    fn small_config(variant: FeatureVariant) -> ModelConfig {
        ModelConfig {
            hidden: 16,
            l_gcn: 2,
            l_mlp: 2,
            variant,
            gate_delta: 1e-6,
            seed: 9,
        }
    }

    fn random_batch(m: usize, n: usize, graphs: usize, variant: FeatureVariant) -> (GraphBatch, Targets) {
        let feats: Vec<GraphFeatures> = (0..graphs)
            .map(|k| extract_features(&generate_instance(&GenConfig::with_scale(m, n, 40 + k as u64)).unwrap(), variant))
            .collect();
        let refs: Vec<&GraphFeatures> = feats.iter().collect();
        let mut r = rng::seeded(3);
        let labels: Vec<LabelPair> = (0..graphs)
            .map(|_| {
                let p_node = (0..m).map(|_| r.gen::<f64>()).collect();
                let mut p_edge = Matrix::from_fn(m, n, |_, _| r.gen::<f64>());
                for j in 0..n {
                    let s = p_edge.column_sum(j);
                    for i in 0..m {
                        p_edge.set(i, j, p_edge.get(i, j) / s);
                    }
                }
                LabelPair { p_node, p_edge }
            })
            .collect();
        let lrefs: Vec<&LabelPair> = labels.iter().collect();
        (GraphBatch::new(&refs).unwrap(), Targets::new(&lrefs))
    }

    #[test]
    fn block_width_examples() {
        assert_eq!(block_widths(128, 4).unwrap(), vec![32; 4]);
        assert_eq!(block_widths(16, 3).unwrap(), vec![6, 5, 5]);
        assert_eq!(block_widths(128, 9).unwrap().iter().sum::<usize>(), 128);
        assert!(block_widths(2, 3).is_err());
    }

    #[test]
    fn embedding_examples() {
        let mut r = rng::seeded(0);
        let mut emb = Embedding::new(&mut r, 128, 4).unwrap();
        emb.bias.iter_mut().for_each(|b| *b = 0.0);
        let zero = emb.forward(&Tensor2::zeros(3, 4)).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        let x = Tensor2::from_vec(2, 4, vec![0.3, -1.0, 2.0, 0.5, 0.3, -1.0, 2.0, 0.5]).unwrap();
        let y = emb.forward(&x).unwrap();
        assert_eq!(y.cols(), 128);
        assert_eq!(y.row(0), y.row(1));
        // column 40 belongs to the second block of 32
        assert_eq!(y.get(0, 40), -emb.weight[40]);
    }

    #[test]
    fn zero_conv_layer_is_identity() {
        let cfg = small_config(FeatureVariant::A);
        let mut net = Network::new(&cfg, HeadKind::Node).unwrap();
        let (batch, _) = random_batch(3, 4, 2, FeatureVariant::A);
        let node = net.embed_node.forward(&batch.node).unwrap();
        let edge = net.embed_edge.forward(&batch.edge).unwrap();
        let layer = &mut net.layers[0];
        for t in [&mut layer.u, &mut layer.v, &mut layer.p, &mut layer.q] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let layer = net.layers[0].clone();
        for mode in [Mode::Train, Mode::Eval] {
            let (n2, e2, _) = net.conv_forward(&layer, &batch.shape, node.clone(), edge.clone(), mode).unwrap();
            assert_eq!((&n2, &e2), (&node, &edge));
            assert_eq!(n2.cols(), 16);
        }
    }

    #[test]
    fn equal_edges_give_uniform_gates() {
        let cfg = small_config(FeatureVariant::A);
        let net = Network::new(&cfg, HeadKind::Node).unwrap();
        let s = BatchShape { graphs: 1, m: 3, n: 4 };
        let node = Tensor2::from_fn(7, 16, |r, c| (r * 16 + c) as f64 * 0.01);
        let edge = Tensor2::from_fn(12, 16, |_, c| c as f64 * 0.1 - 0.5);
        let (_, _, tape) = net.conv_forward(&net.layers[0], &s, node.clone(), edge, Mode::Train).unwrap();
        // facility aggregate is the plain mean of customer embeddings
        for k in 0..16 {
            let mean = (3..7).map(|r| node.get(r, k)).sum::<f64>() / 4.0;
            assert!((tape.agg.get(0, k) - mean).abs() < 1e-5);
        }
    }

    #[test]
    fn head_examples() {
        let cfg = small_config(FeatureVariant::B);
        let inst = generate_instance(&GenConfig::with_scale(4, 6, 1)).unwrap();
        let mut node_net = Network::new(&cfg, HeadKind::Node).unwrap();
        let mut edge_net = Network::new(&cfg, HeadKind::Edge).unwrap();
        for net in [&mut node_net, &mut edge_net] {
            let last = net.head.last_mut().unwrap();
            last.weight.data_mut().iter_mut().for_each(|v| *v = 0.0);
            last.bias[0] = 0.0;
        }
        let pred = predict(&inst, &node_net, &edge_net).unwrap();
        assert_eq!(pred.p_node, vec![0.5; 4]);
        assert!(pred.p_edge.as_slice().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss_node(&[0.2, 0.7], &[0.2, 0.7]).unwrap(), 0.0);
        assert_eq!(loss_node(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(loss_node(&[0.5], &[0.0]).unwrap(), 0.25);
        assert!(loss_node(&[0.5], &[0.0, 1.0]).is_err());

        let uniform = Matrix::filled(4, 1, 0.25);
        let one_hot = Matrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        assert!((loss_edge(&uniform, &one_hot).unwrap() - 4f64.ln()).abs() < 1e-10);
        assert!(loss_edge(&one_hot, &one_hot).unwrap().abs() < 1e-11);
        assert!(loss_edge(&uniform, &Matrix::filled(4, 2, 0.25)).is_err());
    }

    #[test]
    fn variant_mismatch_is_config_error() {
        let node_net = Network::new(&small_config(FeatureVariant::A), HeadKind::Node).unwrap();
        let (batch, _) = random_batch(3, 4, 1, FeatureVariant::B);
        assert!(matches!(node_net.forward(&batch, Mode::Eval), Err(Error::Config(_))));
    }

    #[test]
    fn flat_params_round_trip() {
        let mut net = Network::new(&small_config(FeatureVariant::A), HeadKind::Edge).unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.trainable_lengths().iter().sum::<usize>());
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        net.set_flat_params(&doubled).unwrap();
        assert_eq!(net.flat_params(), doubled);
        assert!(net.set_flat_params(&flat[1..]).is_err());
    }

    fn full_grad_error(kind: HeadKind, variant: FeatureVariant) -> f64 {
        let cfg = small_config(variant);
        let net = Network::new(&cfg, kind).unwrap();
        let (batch, targets) = random_batch(3, 4, 2, variant);
        let params = net.flat_params();
        let f = |p: &[f64]| {
            let mut n = net.clone();
            n.set_flat_params(p).unwrap();
            let (loss, grad, _) = n.loss_and_grad(&batch, &targets).unwrap();
            (loss, grad.flat_params())
        };
        let mut r = rng::seeded(11);
        let probe: Vec<usize> = (0..300).map(|_| r.gen_range(0..params.len())).collect();
        grad_check(f, &params, 1e-5, Some(&probe))
    }

    #[test]
    fn node_network_gradient() {
        let err = full_grad_error(HeadKind::Node, FeatureVariant::A);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn edge_network_gradient() {
        let err = full_grad_error(HeadKind::Edge, FeatureVariant::B);
        assert!(err < 1e-4, "{err}");
    }
}
