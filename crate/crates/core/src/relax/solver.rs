use super::lmo::{aggregate_blocks, positive_part_sum};
use super::smooth::smooth_spectrum;
use super::{DensityMatrix, DualAggregate, GapRecord, RelaxationResult, SmoothingParams};
use crate::linalg::sym_eig;
use crate::model::{factor_root, preprocess_eliminate, CovarianceMatrix, FactorMatrix, Reduction};
use crate::{Error, Matrix, Result, Vector};

/// Smoothing level used when none is given: small enough that the smoothing
/// bias stays well inside the requested gap.
pub fn default_epsilon(tol: f64) -> f64 {
    (tol / 4.0).min(0.05)
}

/// Options for [`solve_psi_covariance`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Smoothing level; `None` picks [`default_epsilon`].
    pub epsilon: Option<f64>,
    /// Target width of the certified interval.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            tol: 1e-3,
            max_iter: 20_000,
        }
    }
}

impl SolveOptions {
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| default_epsilon(self.tol))
    }
}

/// Frank-Wolfe on the smoothed dual `min f(sum_i Y_i)`.
///
/// Iteration `k` takes `X = grad f(Z_{k-1})`, solves every block in closed
/// form to get `W`, and moves `Z_k = (1 - g) Z_{k-1} + g W` with
/// `g = 2/(k+2)`. Each `X` is primal feasible and each `Z` dual feasible, so
/// the best values seen so far bracket `psi(rho)`; the loop stops once that
/// bracket is narrower than `tol`.
pub fn solve_psi(
    a: &FactorMatrix,
    rho: f64,
    params: &SmoothingParams,
    tol: f64,
    max_iter: usize,
) -> Result<RelaxationResult> {
    let n = a.rows();
    if params.n != n {
        return Err(Error::DimensionMismatch {
            expected: params.n,
            found: n,
        });
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol = {tol} must be positive")));
    }
    if a.column_norms_sq().iter().all(|&v| v <= rho) {
        return Err(Error::EmptyProblem { rho });
    }
    let a = a.matrix();

    let mut z = positive_part_sum(a, rho);
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut best_x: Option<(Matrix, Vector)> = None;
    let mut best_z = z.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=max_iter {
        iterations = k;
        let (eig, fill) = smooth_spectrum(&z, params)?;
        if eig.max() < upper {
            upper = eig.max();
            best_z.copy_from(&z);
        }
        let (w, primal) = aggregate_blocks(&eig.vectors, fill.weights.as_slice(), a, rho);
        if !primal.is_finite() || !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite block solution at iteration {k}")));
        }
        if primal > lower {
            lower = primal;
            best_x = Some((eig.vectors, fill.weights.clone()));
        }
        let inner = fill.weights.dot(&eig.values);
        trace.push(GapRecord {
            iteration: k,
            f: fill.value,
            psi_lower: lower,
            psi_upper: upper,
            gap: upper - lower,
            fw_gap: inner - primal,
        });
        if upper - lower <= tol {
            converged = true;
            break;
        }
        let step = 2.0 / (k as f64 + 2.0);
        z.zip_apply(&w, |zi, wi| *zi = (1.0 - step) * *zi + step * wi);
    }

    if !converged {
        // The last update has not been evaluated yet.
        let last = sym_eig(&z)?.max();
        if last < upper {
            upper = last;
            best_z.copy_from(&z);
            if let Some(r) = trace.last_mut() {
                r.psi_upper = upper;
                r.gap = upper - lower;
            }
            converged = upper - lower <= tol;
        }
    }

    let (vectors, weights) = match best_x {
        Some(best) => best,
        None => return Err(Error::invalid("max_iter must be at least 1")),
    };
    let threshold = (1.01 * params.floor).max(1e-8);
    let rank = weights.iter().filter(|&&v| v > threshold).count().max(1);
    Ok(RelaxationResult {
        psi_lower: lower,
        psi_upper: upper,
        x_final: DensityMatrix::from_spectrum(vectors, weights),
        z_final: DualAggregate { z: best_z },
        rank,
        iterations,
        converged,
        epsilon: params.epsilon,
        gap_trace: trace,
    })
}

/// Solve on a covariance matrix, after eliminating variables with
/// `S_ii < rho`.
#[derive(Debug, Clone)]
pub struct CovarianceSolve {
    pub reduction: Reduction,
    pub result: RelaxationResult,
}

impl CovarianceSolve {
    /// Dimension of the reduced problem.
    pub fn reduced_dim(&self) -> usize {
        self.reduction.kept.len()
    }
}

pub fn solve_psi_covariance(sigma: &CovarianceMatrix, rho: f64, opts: &SolveOptions) -> Result<CovarianceSolve> {
    let reduction = preprocess_eliminate(sigma, rho)?;
    let reduced = match &reduction.sigma {
        Some(s) => s,
        None => return Err(Error::EmptyProblem { rho }),
    };
    let epsilon = opts.epsilon();
    let result = if reduced.dim() == 1 {
        // One variable: the relaxation is exact.
        let value = reduced.variance(0) - rho;
        RelaxationResult {
            psi_lower: value,
            psi_upper: value,
            x_final: DensityMatrix::uniform(1),
            z_final: DualAggregate {
                z: Matrix::from_element(1, 1, value),
            },
            rank: 1,
            iterations: 0,
            converged: true,
            epsilon,
            gap_trace: Vec::new(),
        }
    } else {
        let a = factor_root(reduced)?;
        let params = SmoothingParams::new(reduced.dim(), epsilon)?;
        solve_psi(&a, rho, &params, opts.tol, opts.max_iter)?
    };
    Ok(CovarianceSolve { reduction, result })
}
