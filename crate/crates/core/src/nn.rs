//! Dense feed-forward classifier core.
//!
//! A model is a stack of affine maps with a rectifier between them and an
//! identity output; softmax is folded into the loss. Everything is `f64` and
//! row-major so that gradient checks and bitwise determinism tests are
//! meaningful.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Hidden widths used between the input and the output layer by default.
pub const DEFAULT_HIDDEN: [usize; 3] = [250, 125, 64];
pub const DEFAULT_LEARNING_RATE: f64 = 1e-2;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Layer widths including the input and the class count:
/// `[input_dim, hidden.., n_classes]`.
pub fn layer_widths(input_dim: usize, hidden: &[usize], n_classes: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input_dim);
    w.extend_from_slice(hidden);
    w.push(n_classes);
    w
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

/// A mini-batch: `n x d` features with one class index per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    features: Matrix,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Shape("batch must hold at least one sample".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        Ok(Batch { features, labels })
    }

    pub fn from_rows(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        let rows = features.len() / dim;
        Self::new(Matrix::from_vec(rows, dim, features)?, labels)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// One affine map `y = W x + b`, `W` stored `n_out x n_in` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        DenseLayer {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn affine(&self, input: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(input.rows(), self.n_out);
        for (x, y) in input.iter_rows().zip(out.as_mut_slice().chunks_exact_mut(self.n_out)) {
            for ((yj, wj), bj) in y
                .iter_mut()
                .zip(self.weight.chunks_exact(self.n_in))
                .zip(&self.bias)
            {
                *yj = bj + dot(wj, x);
            }
        }
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameter-shaped storage. Models, gradients, velocities, Fisher diagonals
/// and importance weights all share this layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<DenseLayer>,
}

impl ParamSet {
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.n_in, l.n_out))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All scalars, layer by layer, weights before biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.n_in == b.n_in && a.n_out == b.n_out)
    }

    pub(crate) fn check_shape(&self, other: &ParamSet, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!("{what}: parameter shapes differ")))
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &ParamSet) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    /// Squared Euclidean distance to another parameter set.
    pub fn sq_distance(&self, other: &ParamSet) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Human-readable location of the flat index `k` (as used by `iter`).
    pub fn locate(&self, mut k: usize) -> String {
        for (li, l) in self.layers.iter().enumerate() {
            if k < l.weight.len() {
                return format!("layer {li} weight[{}, {}]", k / l.n_in, k % l.n_in);
            }
            k -= l.weight.len();
            if k < l.bias.len() {
                return format!("layer {li} bias[{k}]");
            }
            k -= l.bias.len();
        }
        format!("parameter {k} (out of range)")
    }
}

/// Multi-layer perceptron with rectifier activations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    widths: Vec<usize>,
    params: ParamSet,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Config(format!(
            "need at least an input and an output width, got {widths:?}"
        )));
    }
    if widths.contains(&0) {
        return Err(Error::Config(format!(
            "layer widths must be positive, got {widths:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// All-zero parameters.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        Ok(MlpModel {
            widths: widths.to_vec(),
            params: ParamSet { layers },
        })
    }

    /// He-normal weights (variance `2 / fan_in`), zero biases.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(widths)?;
        let mut rng = seed::rng(seed);
        for layer in &mut model.params.layers {
            let std = (2.0 / layer.n_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut layer.weight {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let mut widths = Vec::with_capacity(params.layers.len() + 1);
        for (i, l) in params.layers.iter().enumerate() {
            if l.weight.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(Error::Shape(format!("layer {i} storage does not match its shape")));
            }
            if i == 0 {
                widths.push(l.n_in);
            } else if widths[i] != l.n_in {
                return Err(Error::Shape(format!("layer {i} input width mismatch")));
            }
            widths.push(l.n_out);
        }
        validate_widths(&widths)?;
        Ok(MlpModel { widths, params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "feature dimension {} does not match model input {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Logits for every row of `x`.
    pub fn forward_features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let n_layers = self.params.layers.len();
        let mut h = self.params.layers[0].affine(x);
        for layer in &self.params.layers[1..n_layers] {
            relu_in_place(&mut h);
            h = layer.affine(&h);
        }
        Ok(h)
    }

    pub fn forward(&self, batch: &Batch) -> Result<Matrix> {
        self.forward_features(batch.features())
    }

    /// Forward pass retaining post-activation hidden states for backprop.
    pub(crate) fn forward_trace(&self, x: &Matrix) -> Result<Trace> {
        self.check_input(x)?;
        let layers = &self.params.layers;
        let mut hidden = Vec::with_capacity(layers.len() - 1);
        let mut h = layers[0].affine(x);
        for layer in &layers[1..] {
            relu_in_place(&mut h);
            let next = layer.affine(&h);
            hidden.push(h);
            h = next;
        }
        Ok(Trace { hidden, logits: h })
    }

    /// Backpropagates `dlogits` through a recorded trace.
    pub(crate) fn backward_trace(&self, x: &Matrix, trace: &Trace, dlogits: &Matrix) -> Result<ParamSet> {
        if dlogits.rows() != x.rows() || dlogits.cols() != self.n_classes() {
            return Err(Error::Shape(format!(
                "dlogits is {}x{}, expected {}x{}",
                dlogits.rows(),
                dlogits.cols(),
                x.rows(),
                self.n_classes()
            )));
        }
        let layers = &self.params.layers;
        let mut grads = self.params.zeros_like();
        let mut delta = dlogits.clone();
        for k in (0..layers.len()).rev() {
            let input = if k == 0 { x } else { &trace.hidden[k - 1] };
            let layer = &layers[k];
            let g = &mut grads.layers[k];
            for (d, inp) in delta.iter_rows().zip(input.iter_rows()) {
                for ((dj, gw), gb) in d
                    .iter()
                    .zip(g.weight.chunks_exact_mut(layer.n_in))
                    .zip(g.bias.iter_mut())
                {
                    if *dj == 0.0 {
                        continue;
                    }
                    *gb += dj;
                    for (w, xi) in gw.iter_mut().zip(inp) {
                        *w += dj * xi;
                    }
                }
            }
            if k > 0 {
                let mut next = Matrix::zeros(delta.rows(), layer.n_in);
                for ((d, inp), out) in delta
                    .iter_rows()
                    .zip(input.iter_rows())
                    .zip(next.as_mut_slice().chunks_exact_mut(layer.n_in))
                {
                    for (dj, wj) in d.iter().zip(layer.weight.chunks_exact(layer.n_in)) {
                        if *dj == 0.0 {
                            continue;
                        }
                        for (o, w) in out.iter_mut().zip(wj) {
                            *o += dj * w;
                        }
                    }
                    // rectifier: gradient flows only where the unit was active
                    for (o, a) in out.iter_mut().zip(inp) {
                        if *a <= 0.0 {
                            *o = 0.0;
                        }
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }

    /// Class probabilities for every row of `x`.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax_rows(&self.forward_features(x)?, 1.0))
    }
}

pub(crate) struct Trace {
    hidden: Vec<Matrix>,
    pub(crate) logits: Matrix,
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Exact gradients of the scalar loss with respect to every parameter, given
/// the loss gradient with respect to the logits.
pub fn backward(model: &MlpModel, batch: &Batch, dlogits: &Matrix) -> Result<ParamSet> {
    let trace = model.forward_trace(batch.features())?;
    model.backward_trace(batch.features(), &trace, dlogits)
}

/// Row-wise softmax of `logits / temperature`, max-shifted.
pub fn softmax_rows(logits: &Matrix, temperature: f64) -> Matrix {
    let mut out = logits.clone();
    for row in out.as_mut_slice().chunks_exact_mut(logits.cols().max(1)) {
        softmax_in_place(row, temperature);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64], temperature: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = ((*v - max) / temperature).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Log-sum-exp of a row, max-shifted.
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    match labels.iter().position(|&l| l >= n_classes) {
        Some(index) => Err(Error::Label {
            label: labels[index],
            n_classes,
            index,
        }),
        None => Ok(()),
    }
}

/// Mean categorical cross-entropy and its gradient `(softmax - onehot) / n`.
pub fn cce_loss_and_grad(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::Shape("empty logits".into()));
    }
    check_labels(labels, logits.cols())?;
    let n = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for ((z, &y), g) in logits
        .iter_rows()
        .zip(labels)
        .zip(grad.as_mut_slice().chunks_exact_mut(logits.cols()))
    {
        let lse = log_sum_exp(z);
        loss += lse - z[y];
        for (gj, zj) in g.iter_mut().zip(z) {
            *gj = (zj - lse).exp() / n;
        }
        g[y] -= 1.0 / n;
    }
    Ok((loss / n, grad))
}

/// CCE loss and parameter gradients in one pass.
pub fn loss_and_grad(model: &MlpModel, batch: &Batch) -> Result<(f64, ParamSet)> {
    let trace = model.forward_trace(batch.features())?;
    let (loss, dlogits) = cce_loss_and_grad(&trace.logits, batch.labels())?;
    let grads = model.backward_trace(batch.features(), &trace, &dlogits)?;
    Ok((loss, grads))
}

/// SGD with classical momentum; no weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub velocities: ParamSet,
}

impl OptimizerState {
    pub fn new(model: &MlpModel, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(OptimizerState {
            learning_rate,
            momentum,
            velocities: model.params().zeros_like(),
        })
    }
}

/// `v <- momentum * v - lr * g; theta <- theta + v`.
///
/// Gradients are validated before anything is written, so a non-finite
/// gradient leaves model and optimizer untouched.
pub fn sgd_step(model: &mut MlpModel, grads: &ParamSet, opt: &mut OptimizerState) -> Result<()> {
    model.params.check_shape(grads, "sgd_step gradients")?;
    model.params.check_shape(&opt.velocities, "sgd_step velocities")?;
    if let Some((k, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::Numeric {
            location: format!("gradient of {}", grads.locate(k)),
            value,
        });
    }
    let (lr, mu) = (opt.learning_rate, opt.momentum);
    for ((theta, v), g) in model
        .params
        .iter_mut()
        .zip(opt.velocities.iter_mut())
        .zip(grads.iter())
    {
        *v = mu * *v - lr * g;
        *theta += *v;
    }
    Ok(())
}

/// Maximum relative error between analytic CCE gradients and central finite
/// differences, `|a - f| / max(|a|, |f|, 1e-12)` over all parameters.
pub fn finite_diff_check(model: &MlpModel, batch: &Batch, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let (_, analytic) = loss_and_grad(model, batch)?;
    let loss_at = |m: &MlpModel| -> Result<f64> {
        let logits = m.forward(batch)?;
        Ok(cce_loss_and_grad(&logits, batch.labels())?.0)
    };
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let original = *probe.params.iter().nth(k).expect("index in range");
        set_param(&mut probe, k, original + eps);
        let plus = loss_at(&probe)?;
        set_param(&mut probe, k, original - eps);
        let minus = loss_at(&probe)?;
        set_param(&mut probe, k, original);
        let f = (plus - minus) / (2.0 * eps);
        let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn set_param(model: &mut MlpModel, k: usize, value: f64) {
    *model.params.iter_mut().nth(k).expect("index in range") = value;
}
