//! Multi-label MLP: affine layers with ReLU between them and a sigmoid head.
//!
//! Loss is binary cross-entropy computed from logits, summed over labels and
//! averaged over the batch. All arithmetic is f64 and every reduction runs in a
//! fixed order, so results are bitwise reproducible for a given seed.

mod checkpoint;
mod train;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use train::{train, train_model, TrainOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("layer dimensions must be at least 1 (got {0:?})")]
    BadDimensions(Vec<usize>),
    #[error("expected input of dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("targets have shape {found:?}, expected {expected:?}")]
    TargetShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate at the end of every epoch.
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 15,
            learning_rate: 2e-4,
            lr_decay: 0.9,
            adam: AdamConfig::default(),
            seed: 0,
            hidden_dims: vec![256],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must be in (0, 1]");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("adam betas must be in [0, 1) and epsilon positive");
        }
        Ok(())
    }

    /// Learning rate used throughout 0-indexed `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch as i32)
    }
}

/// Dense affine map stored as `fan_in x fan_out` so each input unit owns a contiguous row.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    fn weight_slice(&self) -> &[f64] {
        self.weights.as_slice().expect("standard layout")
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.fan_out();
        &self.weight_slice()[i * n..(i + 1) * n]
    }

    /// `bias + sum_i x_i * W[i, :]`, accumulated in increasing `i`.
    fn apply<I: Iterator<Item = (usize, f64)>>(&self, input: I) -> Vec<f64> {
        let mut out = self.bias.to_vec();
        for (i, x) in input {
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += x * w;
            }
        }
        out
    }

    fn param_slices(&self) -> [&[f64]; 2] {
        [
            self.weights.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn param_slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpClassifier {
    layers: Vec<Layer>,
}

/// Per-parameter loss gradients, shaped like the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    layers: Vec<Layer>,
}

impl Gradients {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// All gradients in [`MlpClassifier::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    fn zero(&mut self) {
        for layer in &mut self.layers {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.param_slices().into_iter().flatten().copied())
        .collect()
}

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights and zero biases, deterministic per seed.
pub fn init_model(
    input_dim: usize,
    output_dim: usize,
    config: &TrainConfig,
) -> Result<MlpClassifier, ModelError> {
    let mut dims = vec![input_dim];
    dims.extend(&config.hidden_dims);
    dims.push(output_dim);
    if dims.contains(&0) {
        return Err(ModelError::BadDimensions(dims));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            let mut layer = Layer::zeros(fan_in, fan_out);
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
            layer
        })
        .collect();
    Ok(MlpClassifier { layers })
}

/// Logistic function evaluated without overflow, kept strictly inside (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Binary cross-entropy of a logit against a 0/1 target: `max(z, 0) - z y + ln(1 + e^-|z|)`.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

struct Trace {
    /// Post-ReLU outputs of every hidden layer.
    hidden: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl MlpClassifier {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::BadDimensions(vec![]));
        }
        let mut dims = vec![layers[0].fan_in()];
        for l in &layers {
            if l.fan_in() != *dims.last().expect("non-empty") || l.bias.len() != l.fan_out() {
                return Err(ModelError::BadDimensions(
                    layers.iter().map(Layer::fan_in).collect(),
                ));
            }
            dims.push(l.fan_out());
        }
        if dims.contains(&0) {
            return Err(ModelError::BadDimensions(dims));
        }
        Ok(MlpClassifier { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").fan_out()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All weights and biases, layer by layer (row-major weights, then bias).
    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_parameters(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.parameter_count(), "parameter count");
        let mut rest = values;
        for layer in &mut self.layers {
            for slice in layer.param_slices_mut() {
                let (head, tail) = rest.split_at(slice.len());
                slice.copy_from_slice(head);
                rest = tail;
            }
        }
    }

    fn check_input(&self, x: &FeatureVector) -> Result<(), ModelError> {
        if x.dim() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.dim(),
            });
        }
        Ok(())
    }

    fn trace(&self, x: &FeatureVector) -> Trace {
        let mut z = self.layers[0].apply(x.nonzeros());
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        for layer in &self.layers[1..] {
            for v in &mut z {
                *v = v.max(0.0);
            }
            let next = layer.apply(z.iter().copied().enumerate().filter(|(_, v)| *v != 0.0));
            hidden.push(std::mem::replace(&mut z, next));
        }
        Trace { hidden, logits: z }
    }

    pub fn logits(&self, x: &FeatureVector) -> Result<Vec<f64>, ModelError> {
        self.check_input(x)?;
        Ok(self.trace(x).logits)
    }

    /// Per-label probabilities for one input.
    pub fn forward(&self, x: &FeatureVector) -> Result<Vec<f64>, ModelError> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    /// Row `i` is `forward(features[i])`.
    pub fn predict_probabilities(
        &self,
        features: &[FeatureVector],
    ) -> Result<Array2<f64>, ModelError> {
        let mut out = Array2::zeros((features.len(), self.output_dim()));
        for (mut row, x) in out.rows_mut().into_iter().zip(features) {
            for (o, p) in row.iter_mut().zip(self.forward(x)?) {
                *o = p;
            }
        }
        Ok(out)
    }

    fn check_targets(&self, n: usize, targets: &ArrayView2<'_, bool>) -> Result<(), ModelError> {
        let expected = (n, self.output_dim());
        if targets.dim() != expected {
            return Err(ModelError::TargetShape {
                expected,
                found: targets.dim(),
            });
        }
        Ok(())
    }

    fn empty_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    /// Adds `scale * d loss(x, y) / d params` into `grads` and returns the unscaled loss.
    fn accumulate(&self, x: &FeatureVector, y: &[bool], scale: f64, grads: &mut Gradients) -> f64 {
        let trace = self.trace(x);
        let mut loss = 0.0;
        let mut delta: Vec<f64> = trace
            .logits
            .iter()
            .zip(y)
            .map(|(&z, &t)| {
                let t = if t { 1.0 } else { 0.0 };
                loss += bce_with_logit(z, t);
                (sigmoid_unclamped(z) - t) * scale
            })
            .collect();

        for l in (0..self.layers.len()).rev() {
            let grad = &mut grads.layers[l];
            for (b, d) in grad.bias.iter_mut().zip(&delta) {
                *b += d;
            }
            let fan_out = grad.fan_out();
            let gw = grad.weights.as_slice_mut().expect("standard layout");
            let mut add_row = |i: usize, a: f64| {
                for (g, d) in gw[i * fan_out..(i + 1) * fan_out].iter_mut().zip(&delta) {
                    *g += a * d;
                }
            };
            if l == 0 {
                for (i, a) in x.nonzeros() {
                    add_row(i, a);
                }
                break;
            }
            let input = &trace.hidden[l - 1];
            for (i, &a) in input.iter().enumerate() {
                if a != 0.0 {
                    add_row(i, a);
                }
            }
            let layer = &self.layers[l];
            delta = input
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    if a > 0.0 {
                        layer.row(i).iter().zip(&delta).map(|(w, d)| w * d).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        loss
    }

    /// Mean (over examples) summed-over-labels BCE and its gradient.
    pub fn loss_and_gradients(
        &self,
        features: &[FeatureVector],
        targets: ArrayView2<'_, bool>,
    ) -> Result<(f64, Gradients), ModelError> {
        if features.is_empty() {
            return Err(ModelError::EmptyTrainSet);
        }
        self.check_targets(features.len(), &targets)?;
        let mut grads = self.empty_gradients();
        let scale = 1.0 / features.len() as f64;
        let mut loss = 0.0;
        for (x, y) in features.iter().zip(targets.rows()) {
            self.check_input(x)?;
            let y: Vec<bool> = y.to_vec();
            loss += self.accumulate(x, &y, scale, &mut grads);
        }
        Ok((loss * scale, grads))
    }

    /// Mean summed-over-labels BCE.
    pub fn loss(
        &self,
        features: &[FeatureVector],
        targets: ArrayView2<'_, bool>,
    ) -> Result<f64, ModelError> {
        if features.is_empty() {
            return Err(ModelError::EmptyTrainSet);
        }
        self.check_targets(features.len(), &targets)?;
        let mut total = 0.0;
        for (x, y) in features.iter().zip(targets.rows()) {
            for (z, t) in self.logits(x)?.into_iter().zip(y) {
                total += bce_with_logit(z, if *t { 1.0 } else { 0.0 });
            }
        }
        Ok(total / features.len() as f64)
    }
}

fn sigmoid_unclamped(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
