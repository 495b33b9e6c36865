//! Layer kinds with forward caches and hand-written backward passes.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Matrix, Mode, NeuralError};
use crate::math::{exp, sqrt, tanh};
use crate::rng::SeededRng;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
/// sqrt(2 / pi) for the tanh GELU approximation.
const GELU_K: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    BatchNorm,
    Gelu,
    Relu,
    Dropout { p: f64 },
    SigmoidGate,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        Self { kind: LayerKind::Dense, in_dim, out_dim }
    }
    pub fn batch_norm(dim: usize) -> Self {
        Self { kind: LayerKind::BatchNorm, in_dim: dim, out_dim: dim }
    }
    pub fn gelu(dim: usize) -> Self {
        Self { kind: LayerKind::Gelu, in_dim: dim, out_dim: dim }
    }
    pub fn relu(dim: usize) -> Self {
        Self { kind: LayerKind::Relu, in_dim: dim, out_dim: dim }
    }
    pub fn dropout(dim: usize, p: f64) -> Self {
        Self { kind: LayerKind::Dropout { p }, in_dim: dim, out_dim: dim }
    }
    pub fn sigmoid_gate(dim: usize) -> Self {
        Self { kind: LayerKind::SigmoidGate, in_dim: dim, out_dim: dim }
    }
    pub fn softmax(dim: usize) -> Self {
        Self { kind: LayerKind::Softmax, in_dim: dim, out_dim: dim }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(NeuralError::InvalidSpec("zero-width layer"));
        }
        match self.kind {
            LayerKind::Dense => Ok(()),
            LayerKind::Dropout { p } if !(0.0..1.0).contains(&p) => Err(NeuralError::InvalidSpec("dropout p must lie in [0, 1)")),
            _ if self.in_dim != self.out_dim => Err(NeuralError::InvalidSpec("elementwise layer must keep its width")),
            _ => Ok(()),
        }
    }
}

/// A parameter tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + tanh(GELU_K * (x + GELU_C * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_C * x * x * x);
    let t = tanh(u);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

#[derive(Debug, Clone, Default)]
struct Cache {
    input: Option<Matrix>,
    output: Option<Matrix>,
    /// Batch-norm normalized input and inverse std per feature.
    x_hat: Option<Matrix>,
    inv_std: Vec<f64>,
    mask: Vec<f64>,
    mode: Option<Mode>,
}

/// One layer with its parameters, running statistics and forward cache.
#[derive(Debug, Clone)]
pub struct Layer {
    pub spec: LayerSpec,
    /// Dense: weights (out x in, row-major) then bias. Batch norm: gamma, beta. Gate: logits.
    pub params: Vec<Param>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    cache: Cache,
}

impl Layer {
    /// Initializes a layer: dense weights uniform in ±sqrt(6 / (fan_in + fan_out)),
    /// biases zero, batch-norm gamma one, gates zero (open at 0.5).
    pub fn init(spec: LayerSpec, rng: &mut SeededRng) -> Result<Self, NeuralError> {
        spec.validate()?;
        let (i, o) = (spec.in_dim, spec.out_dim);
        let mut running_mean = Vec::new();
        let mut running_var = Vec::new();
        let params = match spec.kind {
            LayerKind::Dense => {
                let limit = sqrt(6.0 / (i + o) as f64);
                let w = (0..i * o).map(|_| rng.uniform_range(-limit, limit)).collect();
                vec![Param::new(w), Param::new(vec![0.0; o])]
            }
            LayerKind::BatchNorm => {
                running_mean = vec![0.0; o];
                running_var = vec![1.0; o];
                vec![Param::new(vec![1.0; o]), Param::new(vec![0.0; o])]
            }
            LayerKind::SigmoidGate => vec![Param::new(vec![0.0; o])],
            _ => Vec::new(),
        };
        Ok(Self { spec, params, running_mean, running_var, cache: Cache::default() })
    }

    pub fn clear_cache(&mut self) {
        self.cache = Cache::default();
    }

    /// Forward pass. `rng` supplies dropout masks in train mode. With
    /// `keep_cache` the inputs needed by [`Layer::backward`] are stored.
    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut SeededRng, keep_cache: bool) -> Result<Matrix, NeuralError> {
        if x.cols != self.spec.in_dim {
            return Err(NeuralError::DimMismatch { expected: self.spec.in_dim, got: x.cols });
        }
        let out = match self.spec.kind {
            LayerKind::Dense => self.dense_forward(x),
            LayerKind::BatchNorm => return self.bn_forward(x, mode, keep_cache),
            LayerKind::Gelu => x.map(gelu),
            LayerKind::Relu => x.map(|v| v.max(0.0)),
            LayerKind::Dropout { p } => {
                if mode == Mode::Train && p > 0.0 {
                    let keep = 1.0 / (1.0 - p);
                    let mask: Vec<f64> = (0..x.data.len()).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect();
                    let out = Matrix::from_vec(x.rows, x.cols, x.data.iter().zip(&mask).map(|(a, m)| a * m).collect());
                    if keep_cache {
                        self.cache.mask = mask;
                    }
                    out
                } else {
                    if keep_cache {
                        self.cache.mask.clear();
                    }
                    x.clone()
                }
            }
            LayerKind::SigmoidGate => {
                let gate: Vec<f64> = self.params[0].value.iter().map(|&g| sigmoid(g)).collect();
                let mut out = x.clone();
                for r in 0..out.rows {
                    for (v, g) in out.row_mut(r).iter_mut().zip(&gate) {
                        *v *= g;
                    }
                }
                out
            }
            LayerKind::Softmax => x.softmax_rows(),
        };
        if keep_cache {
            self.cache.input = Some(x.clone());
            self.cache.output = Some(out.clone());
            self.cache.mode = Some(mode);
        }
        Ok(out)
    }

    /// Eval-mode forward without touching caches or running stats.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix, NeuralError> {
        if x.cols != self.spec.in_dim {
            return Err(NeuralError::DimMismatch { expected: self.spec.in_dim, got: x.cols });
        }
        Ok(match self.spec.kind {
            LayerKind::Dense => self.dense_forward(x),
            LayerKind::BatchNorm => {
                let gamma = &self.params[0].value;
                let beta = &self.params[1].value;
                let mut out = x.clone();
                for r in 0..out.rows {
                    for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                        let inv_std = 1.0 / sqrt(self.running_var[j] + BN_EPS);
                        *v = gamma[j] * ((*v - self.running_mean[j]) * inv_std) + beta[j];
                    }
                }
                out
            }
            LayerKind::Gelu => x.map(gelu),
            LayerKind::Relu => x.map(|v| v.max(0.0)),
            LayerKind::Dropout { .. } => x.clone(),
            LayerKind::SigmoidGate => {
                let mut out = x.clone();
                for r in 0..out.rows {
                    for (v, g) in out.row_mut(r).iter_mut().zip(&self.params[0].value) {
                        *v *= sigmoid(*g);
                    }
                }
                out
            }
            LayerKind::Softmax => x.softmax_rows(),
        })
    }

    fn dense_forward(&self, x: &Matrix) -> Matrix {
        let (i_dim, o_dim) = (self.spec.in_dim, self.spec.out_dim);
        let w = &self.params[0].value;
        let b = &self.params[1].value;
        let mut out = Matrix::zeros(x.rows, o_dim);
        for r in 0..x.rows {
            let xr = x.row(r);
            let orow = out.row_mut(r);
            for o in 0..o_dim {
                let wr = &w[o * i_dim..(o + 1) * i_dim];
                orow[o] = b[o] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
            }
        }
        out
    }

    fn bn_forward(&mut self, x: &Matrix, mode: Mode, keep_cache: bool) -> Result<Matrix, NeuralError> {
        let d = self.spec.in_dim;
        let n = x.rows;
        let (mean, var_biased) = if mode == Mode::Train {
            if n < 2 {
                return Err(NeuralError::BatchTooSmallForBatchNorm(n));
            }
            let mut mean = vec![0.0; d];
            for r in 0..n {
                for (m, v) in mean.iter_mut().zip(x.row(r)) {
                    *m += v / n as f64;
                }
            }
            let mut var = vec![0.0; d];
            for r in 0..n {
                for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m) / n as f64;
                }
            }
            for j in 0..d {
                let unbiased = var[j] * n as f64 / (n - 1) as f64;
                self.running_mean[j] = (1.0 - BN_MOMENTUM) * self.running_mean[j] + BN_MOMENTUM * mean[j];
                self.running_var[j] = (1.0 - BN_MOMENTUM) * self.running_var[j] + BN_MOMENTUM * unbiased;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var_biased.iter().map(|v| 1.0 / sqrt(v + BN_EPS)).collect();
        let gamma = &self.params[0].value;
        let beta = &self.params[1].value;
        let mut x_hat = Matrix::zeros(n, d);
        let mut out = Matrix::zeros(n, d);
        for r in 0..n {
            for j in 0..d {
                let h = (x.get(r, j) - mean[j]) * inv_std[j];
                x_hat.set(r, j, h);
                out.set(r, j, gamma[j] * h + beta[j]);
            }
        }
        if keep_cache {
            self.cache.x_hat = Some(x_hat);
            self.cache.inv_std = inv_std;
            self.cache.mode = Some(mode);
            self.cache.input = Some(x.clone());
        }
        Ok(out)
    }

    /// Backward pass: accumulates parameter gradients, returns d(loss)/d(input).
    pub fn backward(&mut self, grad: &Matrix) -> Result<Matrix, NeuralError> {
        let input = self.cache.input.as_ref().ok_or(NeuralError::NoForwardCache)?;
        if grad.cols != self.spec.out_dim || grad.rows != input.rows {
            return Err(NeuralError::DimMismatch { expected: self.spec.out_dim, got: grad.cols });
        }
        let n = grad.rows;
        let dx = match self.spec.kind {
            LayerKind::Dense => {
                let (i_dim, o_dim) = (self.spec.in_dim, self.spec.out_dim);
                let mut dx = Matrix::zeros(n, i_dim);
                let (w_param, rest) = self.params.split_at_mut(1);
                let w = &mut w_param[0];
                let b = &mut rest[0];
                for r in 0..n {
                    let g = grad.row(r);
                    let xr = input.row(r);
                    for o in 0..o_dim {
                        let go = g[o];
                        if go == 0.0 {
                            continue;
                        }
                        b.grad[o] += go;
                        let wg = &mut w.grad[o * i_dim..(o + 1) * i_dim];
                        for (wgi, xi) in wg.iter_mut().zip(xr) {
                            *wgi += go * xi;
                        }
                        let wr = &w.value[o * i_dim..(o + 1) * i_dim];
                        for (d, wi) in dx.row_mut(r).iter_mut().zip(wr) {
                            *d += go * wi;
                        }
                    }
                }
                dx
            }
            LayerKind::BatchNorm => {
                let d = self.spec.in_dim;
                let x_hat = self.cache.x_hat.as_ref().ok_or(NeuralError::NoForwardCache)?;
                let inv_std = &self.cache.inv_std;
                let gamma = self.params[0].value.clone();
                let mut dx = Matrix::zeros(n, d);
                for j in 0..d {
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for r in 0..n {
                        let g = grad.get(r, j);
                        sum_g += g;
                        sum_gx += g * x_hat.get(r, j);
                    }
                    self.params[0].grad[j] += sum_gx;
                    self.params[1].grad[j] += sum_g;
                    if self.cache.mode == Some(Mode::Train) {
                        let nf = n as f64;
                        for r in 0..n {
                            let g = grad.get(r, j);
                            let v = gamma[j] * inv_std[j] / nf * (nf * g - sum_g - x_hat.get(r, j) * sum_gx);
                            dx.set(r, j, v);
                        }
                    } else {
                        for r in 0..n {
                            dx.set(r, j, grad.get(r, j) * gamma[j] * inv_std[j]);
                        }
                    }
                }
                dx
            }
            LayerKind::Gelu => Matrix::from_vec(
                n,
                grad.cols,
                grad.data.iter().zip(&input.data).map(|(g, x)| g * gelu_grad(*x)).collect(),
            ),
            LayerKind::Relu => Matrix::from_vec(
                n,
                grad.cols,
                grad.data.iter().zip(&input.data).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect(),
            ),
            LayerKind::Dropout { .. } => {
                if self.cache.mask.is_empty() {
                    grad.clone()
                } else {
                    Matrix::from_vec(n, grad.cols, grad.data.iter().zip(&self.cache.mask).map(|(g, m)| g * m).collect())
                }
            }
            LayerKind::SigmoidGate => {
                let d = self.spec.in_dim;
                let gate: Vec<f64> = self.params[0].value.iter().map(|&g| sigmoid(g)).collect();
                let mut dx = Matrix::zeros(n, d);
                for r in 0..n {
                    for j in 0..d {
                        let g = grad.get(r, j);
                        self.params[0].grad[j] += g * input.get(r, j) * gate[j] * (1.0 - gate[j]);
                        dx.set(r, j, g * gate[j]);
                    }
                }
                dx
            }
            LayerKind::Softmax => {
                let s = self.cache.output.as_ref().ok_or(NeuralError::NoForwardCache)?;
                let mut dx = Matrix::zeros(n, grad.cols);
                for r in 0..n {
                    let dot: f64 = grad.row(r).iter().zip(s.row(r)).map(|(g, p)| g * p).sum();
                    for j in 0..grad.cols {
                        dx.set(r, j, s.get(r, j) * (grad.get(r, j) - dot));
                    }
                }
                dx
            }
        };
        Ok(dx)
    }
}
