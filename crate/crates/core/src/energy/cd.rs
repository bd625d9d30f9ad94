use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, sample_bernoulli, EnergyError, EnergyModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdConfig {
    pub learning_rate: f64,
    /// Gibbs steps per update (CD-k).
    pub k: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for CdConfig {
    fn default() -> Self {
        CdConfig {
            learning_rate: 0.01,
            k: 1,
            batch_size: 128,
            epochs: 10,
            rng_seed: 0,
        }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(EnergyError::InvalidConfig("learning rate must be finite and >= 0"));
        }
        if self.k == 0 {
            return Err(EnergyError::InvalidConfig("k must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(EnergyError::InvalidConfig("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsOutcome {
    /// Visible state after the last step.
    pub visible: Array2<f64>,
    /// Hidden probabilities given the data.
    pub data_hidden: Array2<f64>,
    /// Hidden probabilities given the final visible state.
    pub model_hidden: Array2<f64>,
}

/// Runs `k` rounds of alternating Gibbs sampling from each row of `start`:
/// sample `h ~ p(h | v)`, then `v ~ p(v | h)`.
pub fn gibbs_chain<M: EnergyModel + ?Sized>(
    model: &M,
    start: ArrayView2<f64>,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<GibbsOutcome, EnergyError> {
    check_len(model.visible_len(), start.ncols())?;
    if k == 0 {
        return Err(EnergyError::InvalidConfig("k must be at least 1"));
    }
    let data_hidden = model.hidden_probs(start);
    let mut probs = data_hidden.clone();
    let mut visible = start.to_owned();
    for _ in 0..k {
        let hidden = sample_bernoulli(&probs, rng);
        visible = model.sample_visible(hidden.view(), rng);
        probs = model.hidden_probs(visible.view());
    }
    Ok(GibbsOutcome {
        visible,
        data_hidden,
        model_hidden: probs,
    })
}

/// One contrastive-divergence step on a mini-batch. Statistics are averaged
/// over the batch and scaled by the learning rate. Returns the batch's mean
/// squared mean-field reconstruction error, measured before the update.
pub fn cd_update<M: EnergyModel + ?Sized>(
    model: &mut M,
    batch: ArrayView2<f64>,
    cfg: &CdConfig,
    rng: &mut dyn RngCore,
) -> Result<f64, EnergyError> {
    cfg.validate()?;
    let chain = gibbs_chain(model, batch, cfg.k, rng)?;
    let reconstruction = model.visible_mean(chain.data_hidden.view());
    let error = (&batch - &reconstruction).mapv(|d| d * d).mean().unwrap_or(0.0);
    if cfg.learning_rate == 0.0 {
        return Ok(error);
    }

    let scale = cfg.learning_rate / batch.nrows() as f64;
    let positive = model.weight_statistic(batch).t().dot(&chain.data_hidden);
    let negative = model.weight_statistic(chain.visible.view()).t().dot(&chain.model_hidden);
    let d_weights = (positive - negative) * scale;
    let d_visible = (model.bias_statistic(batch) - model.bias_statistic(chain.visible.view())).sum_axis(Axis(0)) * scale;
    let d_hidden = (&chain.data_hidden - &chain.model_hidden).sum_axis(Axis(0)) * scale;

    let finite = d_weights.iter().chain(&d_visible).chain(&d_hidden).all(|v| v.is_finite())
        && model.weights().iter().zip(&d_weights).all(|(w, d)| (w + d).is_finite());
    if !finite {
        return Err(EnergyError::NonFiniteUpdate);
    }
    model.apply(&d_weights, &d_visible, &d_hidden);
    Ok(error)
}

/// Trains with shuffled mini-batches for `cfg.epochs` epochs. Returns the
/// mean reconstruction error of each epoch.
pub fn train<M: EnergyModel + ?Sized>(
    model: &mut M,
    data: ArrayView2<f64>,
    cfg: &CdConfig,
) -> Result<Vec<f64>, EnergyError> {
    cfg.validate()?;
    check_len(model.visible_len(), data.ncols())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(Axis(0), chunk);
            total += cd_update(model, batch.view(), cfg, &mut rng)?;
            batches += 1;
        }
        history.push(if batches > 0 { total / batches as f64 } else { 0.0 });
    }
    Ok(history)
}
