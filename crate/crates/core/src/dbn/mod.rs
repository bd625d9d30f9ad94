//! Deep belief network: a GRBM input layer, a stack of binary RBMs and a
//! softmax classification head.
//!
//! Training is greedy layer-wise contrastive divergence ([`pretrain`])
//! followed by supervised back-propagation through every layer
//! ([`fine_tune`]). At inference each layer passes its hidden
//! probabilities upward; nothing is sampled.

mod format;

pub use format::{DbnModel, FORMAT_VERSION, MAGIC};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{self, sample_bernoulli, CdConfig, EnergyError, EnergyModel, GrbmParams, RbmParams};

#[derive(Debug, Error)]
pub enum DbnError {
    #[error("layer spec needs an input width and at least one hidden width, all >= 1: {0:?}")]
    InvalidSpec(Vec<usize>),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("class id {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("update produced a non-finite parameter; lower the learning rate")]
    NonFiniteUpdate,
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model format version {found} is not supported (this build reads {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
}

fn dims(expected: usize, found: usize) -> Result<(), DbnError> {
    if expected == found {
        Ok(())
    } else {
        Err(DbnError::DimensionMismatch { expected, found })
    }
}

/// Widths `[input, hidden_1, ..., hidden_L]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self, DbnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(DbnError::InvalidSpec(sizes));
        }
        Ok(LayerSpec { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// What the next layer up is trained on during pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Upward {
    #[default]
    Probabilities,
    Samples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub grbm: GrbmParams,
    pub rbms: Vec<RbmParams>,
    /// Per layer, the mean reconstruction error of each epoch.
    pub reconstruction: Vec<Vec<f64>>,
}

/// Greedy layer-wise pretraining with hidden probabilities fed upward.
pub fn pretrain(x: ArrayView2<f64>, spec: &LayerSpec, cfg: &CdConfig) -> Result<Pretrained, DbnError> {
    pretrain_with(x, spec, cfg, Upward::Probabilities)
}

/// Greedy layer-wise pretraining. Labels are not used: the GRBM is fit to
/// `x`, each RBM to the hidden representation of the layer below.
pub fn pretrain_with(
    x: ArrayView2<f64>,
    spec: &LayerSpec,
    cfg: &CdConfig,
    upward: Upward,
) -> Result<Pretrained, DbnError> {
    let sizes = spec.sizes();
    dims(sizes[0], x.ncols())?;
    cfg.validate()?;
    let mut init = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let layer_cfg = |layer: usize| CdConfig {
        rng_seed: cfg.rng_seed.wrapping_add(1 + layer as u64),
        ..*cfg
    };

    let mut grbm = GrbmParams::new(sizes[0], sizes[1], &mut init);
    let mut reconstruction = vec![energy::train(&mut grbm, x, &layer_cfg(0))?];
    let mut below = propagate(&grbm, x, upward, &mut init);

    let mut rbms = Vec::with_capacity(sizes.len() - 2);
    for (layer, pair) in sizes[1..].windows(2).enumerate() {
        let mut rbm = RbmParams::new(pair[0], pair[1], &mut init);
        reconstruction.push(energy::train(&mut rbm, below.view(), &layer_cfg(layer + 1))?);
        below = propagate(&rbm, below.view(), upward, &mut init);
        rbms.push(rbm);
    }
    Ok(Pretrained {
        grbm,
        rbms,
        reconstruction,
    })
}

fn propagate<M: EnergyModel>(model: &M, x: ArrayView2<f64>, upward: Upward, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let probs = model.hidden_probs(x);
    match upward {
        Upward::Probabilities => probs,
        Upward::Samples => sample_bernoulli(&probs, rng),
    }
}

/// The classifier stack. `head_weights` is classes x last-hidden-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub grbm: GrbmParams,
    pub rbms: Vec<RbmParams>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

/// Gradient of the mean cross-entropy. `layers[0]` belongs to the GRBM.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradient {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl NetworkGradient {
    fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b))
            .chain(&self.head_weights)
            .chain(&self.head_bias)
            .all(|v| v.is_finite())
    }
}

/// Row-wise softmax with the max logit subtracted first.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn log_softmax_at(row: ArrayView1<f64>, class: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row[class] - lse
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Network {
    /// Assembles a network with a zero softmax head over `num_classes` classes.
    pub fn new(grbm: GrbmParams, rbms: Vec<RbmParams>, num_classes: usize) -> Result<Self, DbnError> {
        let mut top = grbm.hidden_len();
        for rbm in &rbms {
            dims(top, rbm.visible_len())?;
            top = rbm.hidden_len();
        }
        if num_classes == 0 {
            return Err(DbnError::InvalidSpec(vec![top, 0]));
        }
        Ok(Network {
            grbm,
            rbms,
            head_weights: Array2::zeros((num_classes, top)),
            head_bias: Array1::zeros(num_classes),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.grbm.visible_len()
    }

    pub fn num_classes(&self) -> usize {
        self.head_bias.len()
    }

    /// `[input, hidden_1, ..., hidden_L]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.grbm.visible_len(), self.grbm.hidden_len()];
        sizes.extend(self.rbms.iter().map(|r| r.hidden_len()));
        sizes
    }

    fn activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(1 + self.rbms.len());
        acts.push(self.grbm.hidden_probs(x));
        for rbm in &self.rbms {
            let next = rbm.hidden_probs(acts.last().expect("non-empty").view());
            acts.push(next);
        }
        acts
    }

    fn logits(&self, top: &Array2<f64>) -> Array2<f64> {
        let mut logits = top.dot(&self.head_weights.t());
        logits += &self.head_bias;
        logits
    }

    /// Class probabilities for each row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, DbnError> {
        dims(self.input_dim(), x.ncols())?;
        let acts = self.activations(x);
        let mut out = self.logits(acts.last().expect("non-empty"));
        softmax_rows(&mut out);
        Ok(out)
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, DbnError> {
        Ok(self.forward_batch(x.insert_axis(Axis(0)))?.remove_axis(Axis(0)))
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<usize, DbnError> {
        Ok(argmax(self.forward(x)?.view()))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, DbnError> {
        let probs = self.forward_batch(x)?;
        Ok(probs.rows().into_iter().map(argmax).collect())
    }

    fn check_labels(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<(), DbnError> {
        dims(self.input_dim(), x.ncols())?;
        dims(x.nrows(), y.len())?;
        if let Some(&class) = y.iter().find(|&&c| c >= self.num_classes()) {
            return Err(DbnError::ClassOutOfRange {
                class,
                classes: self.num_classes(),
            });
        }
        Ok(())
    }

    /// Mean of `-log p(Y = y_i | x_i)`.
    pub fn mean_cross_entropy(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<f64, DbnError> {
        self.check_labels(x, y)?;
        let acts = self.activations(x);
        let logits = self.logits(acts.last().expect("non-empty"));
        Ok(mean_nll(&logits, y))
    }

    /// Mean cross-entropy and its gradient with respect to every weight and
    /// hidden bias.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<(f64, NetworkGradient), DbnError> {
        self.check_labels(x, y)?;
        let batch = x.nrows().max(1) as f64;
        let acts = self.activations(x);
        let top = acts.last().expect("non-empty");
        let logits = self.logits(top);
        let loss = mean_nll(&logits, y);

        let mut delta = logits;
        softmax_rows(&mut delta);
        for (mut row, &class) in delta.rows_mut().into_iter().zip(y) {
            row[class] -= 1.0;
        }
        delta /= batch;

        let head_weights = delta.t().dot(top);
        let head_bias = delta.sum_axis(Axis(0));
        let mut upstream = delta.dot(&self.head_weights);

        let depth = acts.len();
        let mut layers = Vec::with_capacity(depth);
        for layer in (0..depth).rev() {
            let a = &acts[layer];
            let dz = upstream * &a.mapv(|p| p * (1.0 - p));
            let input = if layer == 0 {
                self.grbm.weight_statistic(x)
            } else {
                acts[layer - 1].clone()
            };
            let grad_w = input.t().dot(&dz);
            let grad_b = dz.sum_axis(Axis(0));
            upstream = if layer > 0 {
                dz.dot(&self.rbms[layer - 1].weights.t())
            } else {
                Array2::zeros((0, 0))
            };
            layers.push((grad_w, grad_b));
        }
        layers.reverse();
        Ok((
            loss,
            NetworkGradient {
                layers,
                head_weights,
                head_bias,
            },
        ))
    }

    fn descend(&mut self, grad: &NetworkGradient, lr: f64) {
        for (layer, (gw, gb)) in grad.layers.iter().enumerate() {
            let (w, b) = if layer == 0 {
                (&mut self.grbm.weights, &mut self.grbm.hidden_bias)
            } else {
                let rbm = &mut self.rbms[layer - 1];
                (&mut rbm.weights, &mut rbm.hidden_bias)
            };
            w.scaled_add(-lr, gw);
            b.scaled_add(-lr, gb);
        }
        self.head_weights.scaled_add(-lr, &grad.head_weights);
        self.head_bias.scaled_add(-lr, &grad.head_bias);
    }

    fn all_finite(&self) -> bool {
        self.grbm.weights.iter().chain(&self.grbm.hidden_bias)
            .chain(self.rbms.iter().flat_map(|r| r.weights.iter().chain(&r.hidden_bias)))
            .chain(&self.head_weights)
            .chain(&self.head_bias)
            .all(|v| v.is_finite())
    }
}

fn mean_nll(logits: &Array2<f64>, y: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &class)| -log_softmax_at(row, class))
        .sum();
    total / y.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            learning_rate: 0.01,
            batch_size: 128,
            epochs: 30,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Per layer (GRBM first), mean reconstruction error of each pretraining epoch.
    pub pretrain_reconstruction: Vec<Vec<f64>>,
    /// Mean cross-entropy over the training set after each fine-tuning epoch.
    pub fine_tune_loss: Vec<f64>,
    /// Fraction of training rows classified correctly after each epoch.
    pub fine_tune_accuracy: Vec<f64>,
}

fn accuracy(net: &Network, x: ArrayView2<f64>, y: &[usize]) -> Result<f64, DbnError> {
    if y.is_empty() {
        return Ok(0.0);
    }
    let preds = net.predict_batch(x)?;
    let hits = preds.iter().zip(y).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / y.len() as f64)
}

/// Mini-batch gradient descent on the mean cross-entropy. Returns the loss
/// and accuracy on `(x, y)` after every epoch.
pub fn fine_tune(
    net: &mut Network,
    x: ArrayView2<f64>,
    y: &[usize],
    cfg: &FineTuneConfig,
) -> Result<(Vec<f64>, Vec<f64>), DbnError> {
    net.check_labels(x, y)?;
    if cfg.batch_size == 0 || !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(DbnError::Energy(EnergyError::InvalidConfig(
            "fine-tuning needs batch size >= 1 and a finite learning rate >= 0",
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut accuracies = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (_, grad) = net.loss_and_gradient(bx.view(), &by)?;
            if !grad.all_finite() {
                return Err(DbnError::NonFiniteUpdate);
            }
            if cfg.learning_rate != 0.0 {
                net.descend(&grad, cfg.learning_rate);
                if !net.all_finite() {
                    return Err(DbnError::NonFiniteUpdate);
                }
            }
        }
        losses.push(net.mean_cross_entropy(x, y)?);
        accuracies.push(accuracy(net, x, y)?);
    }
    Ok((losses, accuracies))
}
