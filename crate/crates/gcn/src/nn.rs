//! Layers with hand-derived backward passes, Adam, and a finite-difference
//! gradient checker.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_nt, matmul_tn, Tensor2};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Uniform initialisation in `[-sqrt(1/fan_in), sqrt(1/fan_in)]`.
pub fn uniform_init(rng: &mut moflp_core::rng::Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = (1.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given its pre-activation.
pub fn relu_backward(pre: &Tensor2, grad: &Tensor2) -> Tensor2 {
    let mut out = grad.clone();
    for (g, &p) in out.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// Affine map `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(rng: &mut moflp_core::rng::Rng, fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Tensor2::from_vec(fan_in, fan_out, uniform_init(rng, fan_in * fan_out, fan_in)).unwrap(),
            bias: uniform_init(rng, fan_out, fan_in),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            weight: Tensor2::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        linear(x, &self.weight, &self.bias)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Tensor2, grad_out: &Tensor2, grad: &mut Linear) -> Tensor2 {
        grad.weight.add_assign(&matmul_tn(x, grad_out));
        for r in 0..grad_out.rows() {
            for (b, g) in grad.bias.iter_mut().zip(grad_out.row(r)) {
                *b += g;
            }
        }
        matmul_nt(grad_out, &self.weight)
    }
}

/// `x W + b` with `b` broadcast over rows.
pub fn linear(x: &Tensor2, w: &Tensor2, b: &[f64]) -> Result<Tensor2> {
    if b.len() != w.cols() {
        return Err(Error::Shape(format!("bias of length {} for {} outputs", b.len(), w.cols())));
    }
    let mut y = matmul(x, w)?;
    for r in 0..y.rows() {
        for (v, bb) in y.row_mut(r).iter_mut().zip(b) {
            *v += bb;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch normalisation with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Values saved by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub normalized: Tensor2,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let w = self.gamma.len();
        BatchNorm {
            gamma: vec![0.0; w],
            beta: vec![0.0; w],
            running_mean: vec![0.0; w],
            running_var: vec![0.0; w],
        }
    }

    /// Normalises `x`. In training mode the batch statistics are returned in
    /// the cache; running statistics are only touched by [`Self::update_running`].
    pub fn forward(&self, x: &Tensor2, mode: Mode) -> Result<(Tensor2, Option<BnCache>)> {
        let (rows, cols) = x.shape();
        if cols != self.gamma.len() {
            return Err(Error::Shape(format!("batch norm of width {} given {cols} columns", self.gamma.len())));
        }
        match mode {
            Mode::Eval => {
                let inv: Vec<f64> = self.running_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let y = Tensor2::from_fn(rows, cols, |r, c| {
                    self.gamma[c] * (x.get(r, c) - self.running_mean[c]) * inv[c] + self.beta[c]
                });
                Ok((y, None))
            }
            Mode::Train => {
                if rows == 0 {
                    return Err(Error::Core(moflp_core::Error::Domain(
                        "batch norm needs at least one row in training mode".into(),
                    )));
                }
                let n = rows as f64;
                let mut mean = vec![0.0; cols];
                for r in 0..rows {
                    for (m, v) in mean.iter_mut().zip(x.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; cols];
                for r in 0..rows {
                    for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let normalized = Tensor2::from_fn(rows, cols, |r, c| (x.get(r, c) - mean[c]) * inv_std[c]);
                let y = Tensor2::from_fn(rows, cols, |r, c| self.gamma[c] * normalized.get(r, c) + self.beta[c]);
                Ok((
                    y,
                    Some(BnCache {
                        normalized,
                        mean,
                        var,
                        inv_std,
                    }),
                ))
            }
        }
    }

    /// Exponential moving average of the batch statistics; the variance is
    /// stored unbiased when the batch has more than one row.
    pub fn update_running(&mut self, cache: &BnCache) {
        let rows = cache.normalized.rows() as f64;
        let correction = if rows > 1.0 { rows / (rows - 1.0) } else { 1.0 };
        for c in 0..self.gamma.len() {
            self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * cache.mean[c];
            self.running_var[c] =
                (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * cache.var[c] * correction;
        }
    }

    /// Training-mode backward: accumulates `dgamma`, `dbeta` into `grad` and
    /// returns `dL/dx`.
    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor2, grad: &mut BatchNorm) -> Tensor2 {
        let (rows, cols) = grad_out.shape();
        let n = rows as f64;
        let mut sum_g = vec![0.0; cols];
        let mut sum_gx = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                let g = grad_out.get(r, c);
                sum_g[c] += g;
                sum_gx[c] += g * cache.normalized.get(r, c);
            }
        }
        for c in 0..cols {
            grad.gamma[c] += sum_gx[c];
            grad.beta[c] += sum_g[c];
        }
        Tensor2::from_fn(rows, cols, |r, c| {
            let g = grad_out.get(r, c);
            self.gamma[c] * cache.inv_std[c] / n * (n * g - sum_g[c] - cache.normalized.get(r, c) * sum_gx[c])
        })
    }
}

/// Column-wise softmax of an `m x n` logit matrix.
pub fn softmax_columns(logits: &Tensor2) -> Tensor2 {
    let (rows, cols) = logits.shape();
    let mut out = Tensor2::zeros(rows, cols);
    for c in 0..cols {
        let max = (0..rows).map(|r| logits.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for r in 0..rows {
            let e = (logits.get(r, c) - max).exp();
            out.set(r, c, e);
            sum += e;
        }
        for r in 0..rows {
            out.set(r, c, out.get(r, c) / sum);
        }
    }
    out
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state for parameter tensors of the given lengths.
    pub fn new(learning_rate: f64, shapes: &[usize]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "Adam tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[k].len() || g.len() != p.len() {
                return Err(Error::Shape(format!("tensor {k}: parameter/gradient length mismatch")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for idx in 0..p.len() {
                m[idx] = self.beta1 * m[idx] + (1.0 - self.beta1) * g[idx];
                v[idx] = self.beta2 * v[idx] + (1.0 - self.beta2) * g[idx] * g[idx];
                let m_hat = m[idx] / c1;
                let v_hat = v[idx] / c2;
                p[idx] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Floor of the relative-error denominator, so gradients that are both
/// essentially zero do not register as large relative disagreements.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Worst relative disagreement between the reverse-mode gradient returned by
/// `f` and central finite differences with step `eps`, over the coordinates
/// listed in `probe` (all coordinates when `None`).
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    params: &[f64],
    eps: f64,
    probe: Option<&[usize]>,
) -> f64 {
    let (_, analytic) = f(params);
    let all: Vec<usize>;
    let coords = match probe {
        Some(p) => p,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for &k in coords {
        let orig = x[k];
        x[k] = orig + eps;
        let (plus, _) = f(&x);
        x[k] = orig - eps;
        let (minus, _) = f(&x);
        x[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic[k].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}
