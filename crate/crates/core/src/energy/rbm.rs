use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{as_batch, check_len, sigmoid, EnergyError, EnergyModel};

/// Largest visible + hidden count [`exact_log_likelihood`] will enumerate.
pub const MAX_ENUMERATED_UNITS: usize = 20;

/// Binary-binary RBM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    /// visible x hidden
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl RbmParams {
    /// Weights drawn from Normal(0, 0.01), zero biases.
    pub fn new<R: Rng + ?Sized>(visible: usize, hidden: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        RbmParams {
            weights: Array2::from_shape_simple_fn((visible, hidden), || normal.sample(rng)),
            visible_bias: Array1::zeros(visible),
            hidden_bias: Array1::zeros(hidden),
        }
    }

    pub fn zeros(visible: usize, hidden: usize) -> Self {
        RbmParams {
            weights: Array2::zeros((visible, hidden)),
            visible_bias: Array1::zeros(visible),
            hidden_bias: Array1::zeros(hidden),
        }
    }

    /// `E(v, h) = -v' W h - a' v - b' h`
    pub fn energy(&self, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64, EnergyError> {
        check_len(self.visible_len(), v.len())?;
        check_len(self.hidden_len(), h.len())?;
        Ok(-v.dot(&self.weights.dot(&h)) - self.visible_bias.dot(&v) - self.hidden_bias.dot(&h))
    }

    pub fn hidden_prob(&self, v: ArrayView1<f64>) -> Result<Array1<f64>, EnergyError> {
        check_len(self.visible_len(), v.len())?;
        Ok(self.hidden_probs(as_batch(v)).remove_axis(Axis(0)))
    }

    pub fn visible_prob(&self, h: ArrayView1<f64>) -> Result<Array1<f64>, EnergyError> {
        check_len(self.hidden_len(), h.len())?;
        Ok(self.visible_mean(as_batch(h)).remove_axis(Axis(0)))
    }
}

impl EnergyModel for RbmParams {
    fn visible_len(&self) -> usize {
        self.weights.nrows()
    }

    fn hidden_len(&self) -> usize {
        self.weights.ncols()
    }

    fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    fn hidden_probs(&self, visible: ArrayView2<f64>) -> Array2<f64> {
        let mut act = visible.dot(&self.weights);
        act += &self.hidden_bias;
        act.mapv_inplace(sigmoid);
        act
    }

    fn visible_mean(&self, hidden: ArrayView2<f64>) -> Array2<f64> {
        let mut act = hidden.dot(&self.weights.t());
        act += &self.visible_bias;
        act.mapv_inplace(sigmoid);
        act
    }

    fn sample_visible(&self, hidden: ArrayView2<f64>, rng: &mut dyn rand::RngCore) -> Array2<f64> {
        let probs = self.visible_mean(hidden);
        super::sample_bernoulli(&probs, rng)
    }

    fn weight_statistic(&self, visible: ArrayView2<f64>) -> Array2<f64> {
        visible.to_owned()
    }

    fn bias_statistic(&self, visible: ArrayView2<f64>) -> Array2<f64> {
        visible.to_owned()
    }

    fn apply(&mut self, d_weights: &Array2<f64>, d_visible: &Array1<f64>, d_hidden: &Array1<f64>) {
        self.weights += d_weights;
        self.visible_bias += d_visible;
        self.hidden_bias += d_hidden;
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn bits(state: usize, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |i| ((state >> i) & 1) as f64)
}

/// Mean log-probability of the rows of `data` under the model, by summing
/// over every joint state.
pub fn exact_log_likelihood(p: &RbmParams, data: ArrayView2<f64>) -> Result<f64, EnergyError> {
    let (d, f) = (p.visible_len(), p.hidden_len());
    if d + f > MAX_ENUMERATED_UNITS {
        return Err(EnergyError::TooLargeToEnumerate(d + f));
    }
    check_len(d, data.ncols())?;
    let hiddens: Vec<Array1<f64>> = (0..1usize << f).map(|s| bits(s, f)).collect();
    let log_unnormalized = |v: ArrayView1<f64>| {
        log_sum_exp(hiddens.iter().map(|h| -p.energy(v, h.view()).expect("dims checked")))
    };
    let log_z = log_sum_exp((0..1usize << d).map(|s| log_unnormalized(bits(s, d).view())));
    let total: f64 = data.rows().into_iter().map(|v| log_unnormalized(v) - log_z).sum();
    Ok(total / data.nrows().max(1) as f64)
}
