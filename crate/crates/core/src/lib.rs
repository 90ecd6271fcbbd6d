//! Semidefinite relaxation bounds for penalized sparse PCA.
//!
//! The penalized sparse maximum eigenvalue problem
//!
//! ```text
//! phi(rho) = max_{|x|_2 = 1}  x' S x - rho * card(x)
//! ```
//!
//! is NP-hard. This crate computes its semidefinite relaxation `psi(rho)`
//! with a smoothed Frank-Wolfe scheme that returns a certified primal/dual
//! interval, evaluates the randomized approximation bounds that relate
//! `psi` back to `phi`, and provides the threshold formulas and Monte Carlo
//! harness for detecting a sparse spike in a Gaussian covariance model.
//!
//! Module map:
//!
//! - [`model`]: covariance containers, square roots, Gaussian sampling.
//! - [`oracle`]: exhaustive solvers used as ground truth on small instances.
//! - [`relax`]: the smoothed Frank-Wolfe solver for `psi(rho)`.
//! - [`bounds`]: approximation-ratio functions and randomized rounding.
//! - [`detect`]: detection thresholds, test plans and baseline statistics.
//! - [`experiment`]: the seeded H0/H1 detection experiment.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod detect;
mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod relax;
pub mod rng;
pub mod special;

pub use error::{Error, Result};

pub use bounds::{RatioFunctions, SandwichCertificate};
pub use detect::{DetectionPlan, RhoMode, StatisticRecord};
pub use experiment::{ExperimentConfig, ExperimentReport};
pub use linalg::SymEig;
pub use model::{CovarianceMatrix, FactorMatrix, Hypothesis, ModelConfig, Reduction, SampleSet};
pub use oracle::SparseSolution;
pub use relax::{DensityMatrix, DualAggregate, RelaxationResult, SmoothingParams};

/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
