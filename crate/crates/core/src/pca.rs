//! Principal component analysis through the SVD of the centered data matrix.

use faer::Mat;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues below this fraction of the largest one count as zero when
/// choosing the rank.
pub const ZERO_EIGEN_RATIO: f64 = 1e-12;

pub const DEFAULT_ALPHA: f64 = 0.95;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("PCA needs at least 2 observations, got {0}")]
    TooFewRows(usize),
    #[error("variance fraction alpha must lie in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("every eigenvalue is zero")]
    AllZeroSpectrum,
    #[error("expected {expected} columns, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("SVD did not converge")]
    NoConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Per-variable training mean, length n.
    pub mean: Array1<f64>,
    /// n x r; column k is the k-th principal direction.
    pub loading: Array2<f64>,
    /// Covariance eigenvalues, length n, non-increasing.
    pub eigenvalues: Array1<f64>,
    pub singular_values: Array1<f64>,
    pub rank: usize,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<(), PcaError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(PcaError::AlphaOutOfRange(alpha))
    }
}

/// Smallest `r` whose leading eigenvalues hold at least `alpha` of the total.
pub fn choose_rank(eigenvalues: &[f64], alpha: f64) -> Result<usize, PcaError> {
    check_alpha(alpha)?;
    let max = eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Err(PcaError::AllZeroSpectrum);
    }
    let floor = ZERO_EIGEN_RATIO * max;
    let kept: Vec<f64> = eigenvalues
        .iter()
        .map(|&l| if l < floor { 0.0 } else { l })
        .collect();
    let total: f64 = kept.iter().sum();
    let mut cumulative = 0.0;
    for (i, l) in kept.iter().enumerate() {
        cumulative += l;
        if cumulative / total >= alpha {
            return Ok(i + 1);
        }
    }
    // Rounding can leave the final ratio a hair under alpha = 1.
    Ok(kept.iter().rposition(|&l| l > 0.0).map_or(1, |i| i + 1))
}

/// Fits PCA on an m x n matrix, keeping the fewest components that retain
/// `alpha` of the variance.
pub fn fit(x: ArrayView2<f64>, alpha: f64) -> Result<PcaModel, PcaError> {
    let (m, n) = x.dim();
    if m < 2 {
        return Err(PcaError::TooFewRows(m));
    }
    check_alpha(alpha)?;
    let mean = x.mean_axis(Axis(0)).expect("m >= 2");
    let centered = &x - &mean;

    let matrix = Mat::<f64>::from_fn(m, n, |i, j| centered[[i, j]]);
    let svd = matrix.thin_svd().map_err(|_| PcaError::NoConvergence)?;
    let sv = svd.S().column_vector();
    let v = svd.V();

    let mut order: Vec<usize> = (0..sv.nrows()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    let k = order.len();
    let mut singular_values = Array1::zeros(k);
    let mut directions = Array2::zeros((n, k));
    for (dst, &src) in order.iter().enumerate() {
        singular_values[dst] = sv[src];
        let mut col = directions.column_mut(dst);
        for j in 0..n {
            col[j] = v[(j, src)];
        }
        // Canonical sign: largest-magnitude entry positive.
        let pivot = col
            .iter()
            .copied()
            .reduce(|a, b| if b.abs() > a.abs() { b } else { a })
            .unwrap_or(0.0);
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }

    let divisor = (m - 1) as f64;
    let mut eigenvalues = Array1::zeros(n);
    for (i, s) in singular_values.iter().enumerate() {
        eigenvalues[i] = (s * s / divisor).max(0.0);
    }

    let rank = choose_rank(eigenvalues.as_slice().expect("contiguous"), alpha)?;
    let loading = directions.slice(s![.., ..rank]).to_owned();
    Ok(PcaModel {
        mean,
        loading,
        eigenvalues,
        singular_values,
        rank,
        alpha,
    })
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Projects rows onto the retained components: `(X - mean) * loading`.
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, PcaError> {
        self.project_onto(x, self.rank)
    }

    /// First three principal coordinates of each row.
    pub fn project3(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, PcaError> {
        if self.input_dim() < 3 {
            return Err(PcaError::DimensionMismatch {
                expected: 3,
                found: self.input_dim(),
            });
        }
        if self.rank < 3 {
            return Err(PcaError::DimensionMismatch {
                expected: 3,
                found: self.rank,
            });
        }
        self.project_onto(x, 3)
    }

    fn project_onto(&self, x: ArrayView2<f64>, components: usize) -> Result<Array2<f64>, PcaError> {
        if x.ncols() != self.input_dim() {
            return Err(PcaError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let centered = &x - &self.mean;
        Ok(centered.dot(&self.loading.slice(s![.., ..components])))
    }

    /// Fraction of total variance held by the retained components.
    pub fn retained_fraction(&self) -> f64 {
        let total = self.eigenvalues.sum();
        if total > 0.0 {
            self.eigenvalues.slice(s![..self.rank]).sum() / total
        } else {
            0.0
        }
    }
}
