//! Gaussian-Bernoulli and binary restricted Boltzmann machines.
//!
//! Both models share the [`EnergyModel`] trait so that Gibbs sampling and
//! contrastive-divergence training are written once. Conditionals are
//! evaluated on whole mini-batches: rows are examples.

mod cd;
mod grbm;
mod rbm;

pub use cd::{cd_update, gibbs_chain, train, CdConfig, GibbsOutcome};
pub use grbm::GrbmParams;
pub use rbm::{exact_log_likelihood, RbmParams, MAX_ENUMERATED_UNITS};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("update produced a non-finite parameter; lower the learning rate")]
    NonFiniteUpdate,
    #[error("cannot enumerate {0} units (limit {MAX_ENUMERATED_UNITS})")]
    TooLargeToEnumerate(usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Logistic function that never overflows: the exponent is always <= 0.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<(), EnergyError> {
    if expected == found {
        Ok(())
    } else {
        Err(EnergyError::DimensionMismatch { expected, found })
    }
}

/// Row vector as a 1-row batch.
pub(crate) fn as_batch(v: ArrayView1<f64>) -> ArrayView2<f64> {
    v.insert_axis(ndarray::Axis(0))
}

/// Draws `h ~ Bernoulli(p)` elementwise.
pub fn sample_bernoulli<R: Rng + ?Sized>(probs: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    probs.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// Operations contrastive divergence needs from a two-layer energy model.
pub trait EnergyModel {
    fn visible_len(&self) -> usize;
    fn hidden_len(&self) -> usize;
    fn weights(&self) -> &Array2<f64>;
    fn visible_bias(&self) -> &Array1<f64>;
    fn hidden_bias(&self) -> &Array1<f64>;

    /// `p(h = 1 | v)` for each row of `visible`.
    fn hidden_probs(&self, visible: ArrayView2<f64>) -> Array2<f64>;

    /// Mean of `p(v | h)` for each row of `hidden`.
    fn visible_mean(&self, hidden: ArrayView2<f64>) -> Array2<f64>;

    /// One draw from `p(v | h)` per row.
    fn sample_visible(&self, hidden: ArrayView2<f64>, rng: &mut dyn rand::RngCore) -> Array2<f64>;

    /// Visible statistic paired with hidden units in the weight gradient
    /// (`v / sigma` for Gaussian units).
    fn weight_statistic(&self, visible: ArrayView2<f64>) -> Array2<f64>;

    /// Visible statistic in the visible-bias gradient (`v / sigma^2` for
    /// Gaussian units).
    fn bias_statistic(&self, visible: ArrayView2<f64>) -> Array2<f64>;

    /// Adds the given deltas to the parameters.
    fn apply(&mut self, d_weights: &Array2<f64>, d_visible: &Array1<f64>, d_hidden: &Array1<f64>);
}
