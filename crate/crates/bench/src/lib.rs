//! Shared fixtures for the benchmarks.

use spca_core::model::{sample_covariance, sample_model, Hypothesis, ModelConfig};
use spca_core::CovarianceMatrix;

/// Sample covariance of `m` standard Gaussian points in dimension `n`.
pub fn wishart(n: usize, m: usize, seed: u64) -> CovarianceMatrix {
    let cfg = ModelConfig::new(n, m, 1, 0.0, 0.1, seed).expect("valid config");
    sample_covariance(&sample_model(&cfg, Hypothesis::H0).expect("sampling succeeds"))
}

/// Sample covariance shifted by its mean variance, so it is indefinite.
pub fn indefinite(n: usize, seed: u64) -> nalgebra::DMatrix<f64> {
    let w = wishart(n, n, seed);
    let shift = w.trace() / n as f64;
    w.entries() - nalgebra::DMatrix::identity(n, n) * shift
}
