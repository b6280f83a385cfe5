//! Linear classification head over document embeddings.
//!
//! `p = act(W h + b)` with `act` = softmax for single-label tasks and an
//! element-wise sigmoid for multi-label tasks. Training minimizes the mean
//! cross-entropy against hard or soft targets by mini-batch gradient descent
//! with a cosine-decayed learning rate. For soft targets the cross-entropy
//! differs from `KL(Q || P)` only by the entropy of `Q`, so both objectives
//! share gradients.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TaskMode};
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    Softmax,
    Sigmoid,
}

impl From<TaskMode> for OutputMode {
    fn from(mode: TaskMode) -> Self {
        match mode {
            TaskMode::SingleLabel => OutputMode::Softmax,
            TaskMode::MultiLabel => OutputMode::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityDistribution {
    pub values: Vec<f64>,
    pub mode: OutputMode,
}

impl ProbabilityDistribution {
    /// Index of the largest probability; lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Training target for one example.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// A single class (one-hot).
    Class(usize),
    /// A set of classes: indicator vector for sigmoid heads, uniform mass
    /// over the set for softmax heads.
    Classes(BTreeSet<usize>),
    /// An explicit target distribution.
    Soft(Vec<f64>),
}

impl Target {
    pub fn distribution(&self, n_labels: usize, mode: OutputMode) -> Result<Vec<f64>> {
        let out_of_range = |l: usize| Error::InvalidArgument(format!("label {l} out of range"));
        match self {
            Target::Class(j) => {
                if *j >= n_labels {
                    return Err(out_of_range(*j));
                }
                let mut v = vec![0.0; n_labels];
                v[*j] = 1.0;
                Ok(v)
            }
            Target::Classes(set) => {
                if let Some(&bad) = set.iter().find(|&&l| l >= n_labels) {
                    return Err(out_of_range(bad));
                }
                if set.is_empty() && mode == OutputMode::Softmax {
                    return Err(Error::InvalidArgument(
                        "softmax target needs at least one class".into(),
                    ));
                }
                let mass = match mode {
                    OutputMode::Softmax => 1.0 / set.len() as f64,
                    OutputMode::Sigmoid => 1.0,
                };
                Ok((0..n_labels)
                    .map(|i| if set.contains(&i) { mass } else { 0.0 })
                    .collect())
            }
            Target::Soft(v) => {
                if v.len() != n_labels {
                    return Err(Error::DimensionMismatch {
                        expected: n_labels,
                        actual: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
                    return Err(Error::InvalidArgument(
                        "soft target entries must lie in [0, 1]".into(),
                    ));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Initial learning rate; decays to zero along a half cosine.
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// A probabilistic classifier that can take gradient steps toward target
/// distributions.
pub trait Classifier: Send + Sync {
    fn mode(&self) -> OutputMode;
    fn n_labels(&self) -> usize;
    fn dimension(&self) -> usize;
    fn predict_proba(&self, features: &[f64]) -> Result<ProbabilityDistribution>;

    /// One descent step on the mean cross-entropy of the batch. Returns the
    /// loss measured before the step.
    fn gradient_step(
        &mut self,
        features: &[&[f64]],
        targets: &[&[f64]],
        learning_rate: f64,
    ) -> Result<f64>;
}

/// Labels whose probability strictly exceeds `threshold`. Sigmoid heads only.
pub fn predict_multilabel(
    model: &dyn Classifier,
    features: &[f64],
    threshold: f64,
) -> Result<BTreeSet<usize>> {
    if model.mode() != OutputMode::Sigmoid {
        return Err(Error::InvalidArgument(
            "multi-label prediction needs a sigmoid head".into(),
        ));
    }
    Ok(labels_above(&model.predict_proba(features)?.values, threshold))
}

pub(crate) fn labels_above(values: &[f64], threshold: f64) -> BTreeSet<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Unit-norm embedding of each document's normalized text.
pub fn featurize(documents: &[Document], provider: &dyn EmbeddingProvider) -> Result<Vec<Vec<f64>>> {
    let texts: Vec<String> = documents.iter().map(|d| d.text.clone()).collect();
    Ok(provider
        .embed_batch(&texts)?
        .into_iter()
        .map(|e| e.normalized().into_vec())
        .collect())
}

/// Gradient of the mean loss with respect to the weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Row-major `n_labels x dimension`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    mode: OutputMode,
    n_labels: usize,
    dimension: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearClassifier {
    /// All-zero parameters.
    pub fn zeros(n_labels: usize, dimension: usize, mode: OutputMode) -> Self {
        LinearClassifier {
            mode,
            n_labels,
            dimension,
            weights: vec![0.0; n_labels * dimension],
            bias: vec![0.0; n_labels],
        }
    }

    pub fn from_parameters(
        mode: OutputMode,
        dimension: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let n_labels = bias.len();
        if n_labels == 0 {
            return Err(Error::InvalidArgument("classifier needs at least one label".into()));
        }
        if weights.len() != n_labels * dimension {
            return Err(Error::DimensionMismatch {
                expected: n_labels * dimension,
                actual: weights.len(),
            });
        }
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("classifier parameters".into()));
        }
        Ok(LinearClassifier {
            mode,
            n_labels,
            dimension,
            weights,
            bias,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn check_dimension(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: h.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_dimension(h)?;
        Ok(self
            .weights
            .chunks_exact(self.dimension)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect())
    }

    fn activate(&self, z: &[f64]) -> Vec<f64> {
        match self.mode {
            OutputMode::Softmax => {
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / sum).collect()
            }
            OutputMode::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
        }
    }

    /// Cross-entropy of one example given logits `z` and target `q`.
    fn example_loss(&self, z: &[f64], q: &[f64]) -> f64 {
        match self.mode {
            OutputMode::Softmax => {
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                z.iter()
                    .zip(q)
                    .filter(|(_, &t)| t > 0.0)
                    .map(|(v, t)| -t * (v - lse))
                    .sum()
            }
            OutputMode::Sigmoid => z
                .iter()
                .zip(q)
                .map(|(&v, &t)| t * softplus(-v) + (1.0 - t) * softplus(v))
                .sum(),
        }
    }

    fn check_batch(&self, features: &[&[f64]], targets: &[&[f64]]) -> Result<()> {
        if features.is_empty() || features.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "batch has {} feature rows and {} target rows",
                features.len(),
                targets.len()
            )));
        }
        for (h, q) in features.iter().zip(targets) {
            self.check_dimension(h)?;
            if q.len() != self.n_labels {
                return Err(Error::DimensionMismatch {
                    expected: self.n_labels,
                    actual: q.len(),
                });
            }
        }
        Ok(())
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, features: &[&[f64]], targets: &[&[f64]]) -> Result<f64> {
        self.check_batch(features, targets)?;
        let mut total = 0.0;
        for (h, q) in features.iter().zip(targets) {
            total += self.example_loss(&self.logits(h)?, q);
        }
        Ok(total / features.len() as f64)
    }

    /// Mean cross-entropy and its gradient. The gradient with respect to the
    /// logits is `p - q` for both heads.
    pub fn loss_and_gradient(
        &self,
        features: &[&[f64]],
        targets: &[&[f64]],
    ) -> Result<(f64, Gradient)> {
        self.check_batch(features, targets)?;
        let d = self.dimension;
        let mut grad = Gradient {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.n_labels],
        };
        let mut total = 0.0;
        for (h, q) in features.iter().zip(targets) {
            let z = self.logits(h)?;
            total += self.example_loss(&z, q);
            let p = self.activate(&z);
            for (j, (pj, qj)) in p.iter().zip(q.iter()).enumerate() {
                let delta = pj - qj;
                grad.bias[j] += delta;
                for (g, x) in grad.weights[j * d..(j + 1) * d].iter_mut().zip(h.iter()) {
                    *g += delta * x;
                }
            }
        }
        let inv = 1.0 / features.len() as f64;
        grad.weights.iter_mut().for_each(|g| *g *= inv);
        grad.bias.iter_mut().for_each(|g| *g *= inv);
        Ok((total * inv, grad))
    }

    pub fn apply(&mut self, gradient: &Gradient, learning_rate: f64) -> Result<()> {
        for (w, g) in self.weights.iter_mut().zip(&gradient.weights) {
            *w -= learning_rate * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&gradient.bias) {
            *b -= learning_rate * g;
        }
        if self.weights.iter().chain(&self.bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(
                "classifier parameters (learning rate too large?)".into(),
            ));
        }
        Ok(())
    }

    pub fn to_model_file(&self, provider: &str, manifest: serde_json::Value) -> ModelFile {
        ModelFile {
            dimension: self.dimension,
            mode: self.mode,
            n_labels: self.n_labels,
            weights: self.weights.clone(),
            bias: self.bias.clone(),
            provider: provider.to_string(),
            manifest,
        }
    }
}

impl Classifier for LinearClassifier {
    fn mode(&self) -> OutputMode {
        self.mode
    }

    fn n_labels(&self) -> usize {
        self.n_labels
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn predict_proba(&self, features: &[f64]) -> Result<ProbabilityDistribution> {
        let z = self.logits(features)?;
        Ok(ProbabilityDistribution {
            values: self.activate(&z),
            mode: self.mode,
        })
    }

    fn gradient_step(
        &mut self,
        features: &[&[f64]],
        targets: &[&[f64]],
        learning_rate: f64,
    ) -> Result<f64> {
        let (loss, grad) = self.loss_and_gradient(features, targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        self.apply(&grad, learning_rate)?;
        Ok(loss)
    }
}

/// Serialized model. `weights` is row-major `n_labels x dimension`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dimension: usize,
    pub mode: OutputMode,
    pub n_labels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub provider: String,
    pub manifest: serde_json::Value,
}

impl ModelFile {
    pub fn to_classifier(&self) -> Result<LinearClassifier> {
        if self.bias.len() != self.n_labels {
            return Err(Error::DimensionMismatch {
                expected: self.n_labels,
                actual: self.bias.len(),
            });
        }
        LinearClassifier::from_parameters(
            self.mode,
            self.dimension,
            self.weights.clone(),
            self.bias.clone(),
        )
    }
}

/// Per-epoch mean training loss, measured on the full training set after
/// each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Learning rate at `step` of `total` under half-cosine decay to zero.
pub fn cosine_schedule(initial: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return initial;
    }
    initial * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos())
}

/// Fits a fresh linear head on `examples` starting from zero parameters.
pub fn train(
    examples: &[(Vec<f64>, Target)],
    n_labels: usize,
    mode: OutputMode,
    config: &TrainConfig,
) -> Result<(LinearClassifier, TrainingTrace)> {
    let first = examples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training examples".into()))?;
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let dimension = first.0.len();
    let features: Vec<&[f64]> = examples.iter().map(|(h, _)| h.as_slice()).collect();
    let targets: Vec<Vec<f64>> = examples
        .iter()
        .map(|(_, t)| t.distribution(n_labels, mode))
        .collect::<Result<_>>()?;
    let target_refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();

    let mut model = LinearClassifier::zeros(n_labels, dimension, mode);
    let initial_loss = model.loss(&features, &target_refs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let h: Vec<&[f64]> = batch.iter().map(|&i| features[i]).collect();
            let q: Vec<&[f64]> = batch.iter().map(|&i| target_refs[i]).collect();
            let lr = cosine_schedule(config.learning_rate, step, total_steps);
            model.gradient_step(&h, &q, lr)?;
            step += 1;
        }
        let loss = model.loss(&features, &target_refs)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        epoch_losses.push(loss);
    }
    Ok((
        model,
        TrainingTrace {
            initial_loss,
            epoch_losses,
        },
    ))
}
