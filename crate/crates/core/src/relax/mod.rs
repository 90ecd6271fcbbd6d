//! Semidefinite relaxation `psi(rho)` of the penalized sparse eigenvalue
//! problem:
//!
//! ```text
//! psi(rho) = max { sum_i Tr(X^{1/2} a_i a_i' X^{1/2} - rho X)_+ : Tr X = 1, X >= 0 }
//! ```
//!
//! computed through its dual `min lambda_max(sum_i Y_i)` over
//! `Y_i >= a_i a_i' - rho I, Y_i >= 0`. The nonsmooth `lambda_max` is replaced
//! by an entropy-smoothed version whose gradient is a density matrix, and the
//! smoothed dual is minimized by Frank-Wolfe with closed-form rank-one
//! linear minimization steps. Every iterate yields a primal lower bound and a
//! dual upper bound on `psi(rho)`, so the returned interval is certified
//! whether or not the iteration converged.

mod lmo;
mod smooth;
mod solver;

pub use lmo::{lmo_block, lmo_certificate, psi_primal_value, LmoBlock};
pub use smooth::{smooth_grad, smooth_value, water_fill, WaterFill};
pub use solver::{default_epsilon, solve_psi, solve_psi_covariance, CovarianceSolve, SolveOptions};

use std::io::Write;

use serde::Serialize;

use crate::linalg::{self, spectral_product, sym_eig, SymEig};
use crate::{Error, Matrix, Result, Vector};

/// Smoothing level of the entropy-regularized `lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothingParams {
    pub n: usize,
    /// Smoothing level `epsilon` in (0, 1).
    pub epsilon: f64,
    /// Entropy coefficient `epsilon / log n`.
    pub beta: f64,
    /// Eigenvalue floor `epsilon / n` imposed on the density matrix.
    pub floor: f64,
}

impl SmoothingParams {
    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("smoothing needs n >= 2, got {n}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon = {epsilon} must lie in (0, 1)")));
        }
        let nf = n as f64;
        Ok(Self {
            n,
            epsilon,
            beta: epsilon / nf.ln(),
            floor: epsilon / nf,
        })
    }

    /// Gradient Lipschitz bound `log n / epsilon` (trace norm).
    pub fn lipschitz(&self) -> f64 {
        (self.n as f64).ln() / self.epsilon
    }
}

/// Tolerances on the density-matrix invariants.
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Symmetric positive semidefinite matrix of unit trace, stored together with
/// its eigendecomposition.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    x: Matrix,
    eig: SymEig,
}

impl DensityMatrix {
    pub fn new(x: Matrix) -> Result<Self> {
        if !x.is_square() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: x.ncols(),
            });
        }
        if linalg::asymmetry(&x) > 1e-10 {
            return Err(Error::invalid("density matrix is not symmetric"));
        }
        let mut x = x;
        linalg::symmetrize(&mut x);
        let tr = x.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::invalid(format!("density matrix has trace {tr}")));
        }
        let eig = sym_eig(&x)?;
        if eig.min() < -PSD_TOL {
            return Err(Error::NotPsd {
                min_eigenvalue: eig.min(),
            });
        }
        Ok(Self { x, eig })
    }

    /// `I / n`.
    pub fn uniform(n: usize) -> Self {
        Self::new(Matrix::identity(n, n) / n as f64).expect("I/n is a density matrix")
    }

    /// `v v' / |v|^2`.
    pub fn rank_one(v: &Vector) -> Result<Self> {
        let nrm = v.norm_squared();
        if !(nrm > 0.0) {
            return Err(Error::invalid("zero vector"));
        }
        Self::new(v * v.transpose() / nrm)
    }

    /// Builds `V diag(w) V'` without recomputing the spectrum. `w` must be
    /// nonnegative and sum to one; `vectors` orthonormal.
    pub(crate) fn from_spectrum(vectors: Matrix, weights: Vector) -> Self {
        let x = spectral_product(&vectors, &weights);
        let n = weights.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]));
        let values = Vector::from_iterator(n, order.iter().map(|&i| weights[i]));
        let mut sorted = Matrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            sorted.set_column(dst, &vectors.column(src));
        }
        Self {
            x,
            eig: SymEig {
                values,
                vectors: sorted,
            },
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.x
    }

    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig.min()
    }

    /// Eigenvalues clamped at zero.
    pub(crate) fn weights(&self) -> Vector {
        self.eig.values.map(|v| v.max(0.0))
    }

    pub fn sqrt(&self) -> Matrix {
        self.eig.map_spectrum(|v| v.max(0.0).sqrt())
    }

    /// `X^{-1/2}`; fails when `X` is singular to working precision.
    pub fn inv_sqrt(&self) -> Result<Matrix> {
        self.check_invertible()?;
        Ok(self.eig.map_spectrum(|v| 1.0 / v.sqrt()))
    }

    pub(crate) fn check_invertible(&self) -> Result<()> {
        if !(self.eig.min() > 1e-14 * self.eig.max()) {
            return Err(Error::invalid(format!(
                "density matrix is not invertible (minimum eigenvalue {:e})",
                self.eig.min()
            )));
        }
        Ok(())
    }

    /// Number of eigenvalues above `threshold`, at least one.
    pub fn numerical_rank(&self, threshold: f64) -> usize {
        self.eig.values.iter().filter(|&&v| v > threshold).count().max(1)
    }
}

/// Dual aggregate `Z = sum_i Y_i`. Its top eigenvalue bounds `psi(rho)` from
/// above.
#[derive(Debug, Clone)]
pub struct DualAggregate {
    pub z: Matrix,
}

impl DualAggregate {
    pub fn lambda_max(&self) -> Result<f64> {
        linalg::lambda_max(&self.z)
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRecord {
    pub iteration: usize,
    /// Smoothed objective `f(Z_{k-1})`.
    pub f: f64,
    /// Best certified lower bound so far.
    pub psi_lower: f64,
    /// Best certified upper bound so far.
    pub psi_upper: f64,
    /// `psi_upper - psi_lower`.
    pub gap: f64,
    /// Frank-Wolfe surrogate gap `Tr(grad f (Z - W))` of the smoothed problem.
    pub fw_gap: f64,
}

/// Certified bracket on `psi(rho)` and the iterates that produced it.
#[derive(Debug, Clone)]
pub struct RelaxationResult {
    /// Primal value at `x_final`, a lower bound on `psi(rho)`.
    pub psi_lower: f64,
    /// `lambda_max(z_final)`, an upper bound on `psi(rho)`.
    pub psi_upper: f64,
    /// Primal iterate achieving `psi_lower`.
    pub x_final: DensityMatrix,
    /// Dual aggregate achieving `psi_upper`.
    pub z_final: DualAggregate,
    /// Numerical rank of `x_final`.
    pub rank: usize,
    pub iterations: usize,
    pub converged: bool,
    pub epsilon: f64,
    pub gap_trace: Vec<GapRecord>,
}

impl RelaxationResult {
    pub fn gap(&self) -> f64 {
        self.psi_upper - self.psi_lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.psi_lower + self.psi_upper)
    }

    /// Writes the trace as CSV with a header row.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["iteration", "f", "psi_lower", "psi_upper", "gap", "fw_gap"])?;
        for r in &self.gap_trace {
            wtr.write_record([
                r.iteration.to_string(),
                crate::io::format_float(r.f),
                crate::io::format_float(r.psi_lower),
                crate::io::format_float(r.psi_upper),
                crate::io::format_float(r.gap),
                crate::io::format_float(r.fw_gap),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(SmoothingParams::new(1, 0.1).is_err());
        assert!(SmoothingParams::new(5, 0.0).is_err());
        assert!(SmoothingParams::new(5, 1.0).is_err());
        let p = SmoothingParams::new(10, 0.1).unwrap();
        assert!((p.beta - 0.1 / 10f64.ln()).abs() < 1e-16);
        assert!((p.floor - 0.01).abs() < 1e-16);
        assert!(p.floor * p.n as f64 <= 1.0);
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(Matrix::identity(3, 3)).is_err());
        let mut m = Matrix::from_diagonal(&Vector::from_vec(vec![1.2, -0.2]));
        assert!(matches!(DensityMatrix::new(m.clone()), Err(Error::NotPsd { .. })));
        m[(1, 1)] = 0.0;
        m[(0, 0)] = 1.0;
        let d = DensityMatrix::new(m).unwrap();
        assert!(d.inv_sqrt().is_err());
        assert_eq!(d.numerical_rank(1e-8), 1);
        let u = DensityMatrix::uniform(4);
        assert!((u.inv_sqrt().unwrap() - Matrix::identity(4, 4) * 2.0).amax() < 1e-12);
    }
}
