use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{as_batch, check_len, sigmoid, EnergyError, EnergyModel};

/// Gaussian-Bernoulli RBM: real-valued visible units with per-unit standard
/// deviation `sigma`, binary hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrbmParams {
    /// visible x hidden
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub sigma: Array1<f64>,
}

impl GrbmParams {
    /// Weights drawn from Normal(0, 0.01), zero biases, unit sigma.
    pub fn new<R: Rng + ?Sized>(visible: usize, hidden: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        GrbmParams {
            weights: Array2::from_shape_simple_fn((visible, hidden), || normal.sample(rng)),
            visible_bias: Array1::zeros(visible),
            hidden_bias: Array1::zeros(hidden),
            sigma: Array1::ones(visible),
        }
    }

    fn check_visible(&self, v: ArrayView1<f64>) -> Result<(), EnergyError> {
        check_len(self.visible_len(), v.len())
    }

    fn check_hidden(&self, h: ArrayView1<f64>) -> Result<(), EnergyError> {
        check_len(self.hidden_len(), h.len())
    }

    /// `E(v, h) = sum_i (v_i - a_i)^2 / (2 sigma_i^2) - sum_ij w_ij h_j v_i / sigma_i - sum_j b_j h_j`
    pub fn energy(&self, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64, EnergyError> {
        self.check_visible(v)?;
        self.check_hidden(h)?;
        let quadratic: f64 = v
            .iter()
            .zip(&self.visible_bias)
            .zip(&self.sigma)
            .map(|((v, a), s)| (v - a).powi(2) / (2.0 * s * s))
            .sum();
        let scaled = &v / &self.sigma;
        let interaction = scaled.dot(&self.weights.dot(&h));
        Ok(quadratic - interaction - self.hidden_bias.dot(&h))
    }

    pub fn hidden_prob(&self, v: ArrayView1<f64>) -> Result<Array1<f64>, EnergyError> {
        self.check_visible(v)?;
        Ok(self.hidden_probs(as_batch(v)).remove_axis(Axis(0)))
    }

    pub fn visible_mean_of(&self, h: ArrayView1<f64>) -> Result<Array1<f64>, EnergyError> {
        self.check_hidden(h)?;
        Ok(self.visible_mean(as_batch(h)).remove_axis(Axis(0)))
    }

    /// Draws `v_i ~ Normal(a_i + sum_j h_j w_ij, sigma_i^2)`.
    pub fn visible_sample<R: Rng>(&self, h: ArrayView1<f64>, rng: &mut R) -> Result<Array1<f64>, EnergyError> {
        self.check_hidden(h)?;
        Ok(self.sample_visible(as_batch(h), rng).remove_axis(Axis(0)))
    }
}

impl EnergyModel for GrbmParams {
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
        let mut act = self.weight_statistic(visible).dot(&self.weights);
        act += &self.hidden_bias;
        act.mapv_inplace(sigmoid);
        act
    }

    fn visible_mean(&self, hidden: ArrayView2<f64>) -> Array2<f64> {
        let mut mean = hidden.dot(&self.weights.t());
        mean += &self.visible_bias;
        mean
    }

    fn sample_visible(&self, hidden: ArrayView2<f64>, rng: &mut dyn rand::RngCore) -> Array2<f64> {
        let mut v = self.visible_mean(hidden);
        for mut row in v.rows_mut() {
            for (x, s) in row.iter_mut().zip(&self.sigma) {
                let z: f64 = StandardNormal.sample(rng);
                *x += s * z;
            }
        }
        v
    }

    fn weight_statistic(&self, visible: ArrayView2<f64>) -> Array2<f64> {
        &visible / &self.sigma
    }

    fn bias_statistic(&self, visible: ArrayView2<f64>) -> Array2<f64> {
        let var = self.sigma.mapv(|s| s * s);
        &visible / &var
    }

    fn apply(&mut self, d_weights: &Array2<f64>, d_visible: &Array1<f64>, d_hidden: &Array1<f64>) {
        self.weights += d_weights;
        self.visible_bias += d_visible;
        self.hidden_bias += d_hidden;
    }
}
