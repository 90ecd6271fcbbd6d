//! Rank-one blocks of the relaxation.
//!
//! For `u = X^{1/2} a` the block matrix `M = u u' - rho X` has at most one
//! positive eigenvalue (Sylvester inertia, `X` is PSD). In the eigenbasis
//! `X = V diag(x) V'`, with `c = V'a`, that eigenvalue `alpha` is the root in
//! `(0, |u|^2)` of the secular equation
//!
//! ```text
//! g(alpha) = sum_j x_j c_j^2 / (alpha + rho x_j) = 1,
//! ```
//!
//! and exists iff `g(0+) > 1`, i.e. `rho < |a|^2` when `X` is invertible.
//! The matching eigenvector is `v_j ~ sqrt(x_j) c_j / (alpha + rho x_j)`, so
//! every block costs `O(n)` once `V'A` is known.

use super::DensityMatrix;
use crate::model::FactorMatrix;
use crate::{Error, Matrix, Result, Vector};

/// Positive eigenpair of one block, in the eigenbasis of `X`.
#[derive(Debug, Clone)]
pub(crate) struct BlockRoot {
    /// `alpha = lambda_max(X^{1/2} B X^{1/2}) > 0`.
    pub alpha: f64,
    /// `s_j = c_j / (alpha + rho x_j)`.
    pub s: Vector,
    /// `sum_j x_j s_j^2`.
    pub norm_sq: f64,
}

/// Solves the secular equation for one block. `weights` are the eigenvalues
/// of `X` (clamped at zero) and `coeffs` the coordinates of `a` in its
/// eigenbasis. Returns `None` when the block has no positive eigenvalue.
pub(crate) fn block_root(weights: &[f64], coeffs: &[f64], rho: f64) -> Option<BlockRoot> {
    let mut g0 = 0.0;
    let mut upper = 0.0;
    for (&x, &c) in weights.iter().zip(coeffs) {
        if x > 0.0 {
            g0 += c * c;
            upper += x * c * c;
        }
    }
    if g0 <= rho || upper <= 0.0 {
        return None;
    }

    let eval = |alpha: f64| -> (f64, f64) {
        let mut g = 0.0;
        let mut dg = 0.0;
        for (&x, &c) in weights.iter().zip(coeffs) {
            if x > 0.0 {
                let d = alpha + rho * x;
                let t = x * c * c / d;
                g += t;
                dg += t / d;
            }
        }
        (g, dg)
    };

    // g is convex and decreasing on (0, inf), so Newton from the left stays
    // left of the root. The bracket only guards against rounding.
    let (mut lo, mut hi) = (0.0_f64, upper);
    let mut alpha = 0.0_f64;
    for _ in 0..200 {
        let (g, dg) = eval(alpha);
        if g > 1.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
        let mut next = alpha + (g - 1.0) / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - alpha).abs() <= 4.0 * f64::EPSILON * next.abs();
        alpha = next;
        if done || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    if !(alpha > 0.0) {
        return None;
    }

    let s = Vector::from_iterator(
        weights.len(),
        weights
            .iter()
            .zip(coeffs)
            .map(|(&x, &c)| c / (alpha + rho * x.max(0.0))),
    );
    let norm_sq = weights.iter().zip(s.iter()).map(|(&x, &sj)| x.max(0.0) * sj * sj).sum();
    Some(BlockRoot { alpha, s, norm_sq })
}

/// Output of the block linear minimization
/// `min { Tr(X Y) : Y >= a a' - rho I, Y >= 0 }`.
#[derive(Debug, Clone)]
pub struct LmoBlock {
    /// Optimal `Y = q q'` (zero when `rho >= |a|^2`).
    pub y: Matrix,
    /// `q` with `Y = q q'`.
    pub factor: Vector,
    /// Optimal value `Tr(X Y) = Tr(X^{1/2} B X^{1/2})_+`.
    pub objective: f64,
}

fn check_inputs(x: &DensityMatrix, a: &Vector, rho: f64) -> Result<()> {
    if a.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: a.len(),
        });
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    Ok(())
}

/// Closed-form rank-one solution of the block subproblem.
///
/// With `v` the leading unit eigenvector of `M = X^{1/2}(a a' - rho I)X^{1/2}`
/// and `alpha` its eigenvalue, the minimizer is
/// `Y = alpha X^{-1/2} v v' X^{-1/2}`, which is symmetric and PSD by
/// construction.
pub fn lmo_block(x: &DensityMatrix, a: &Vector, rho: f64) -> Result<LmoBlock> {
    check_inputs(x, a, rho)?;
    x.check_invertible()?;
    let n = x.dim();
    let eig = x.eig();
    let weights = x.weights();
    let coeffs = eig.vectors.transpose() * a;
    match block_root(weights.as_slice(), coeffs.as_slice(), rho) {
        None => Ok(LmoBlock {
            y: Matrix::zeros(n, n),
            factor: Vector::zeros(n),
            objective: 0.0,
        }),
        Some(root) => {
            let factor = &eig.vectors * &root.s * (root.alpha / root.norm_sq).sqrt();
            let y = &factor * factor.transpose();
            Ok(LmoBlock {
                y,
                factor,
                objective: root.alpha,
            })
        }
    }
}

/// Dual certificate `P = X^{1/2} v v' X^{1/2}` of the block subproblem, which
/// satisfies `0 <= P <= X` and `Tr(P B) = Tr(X Y)`. `None` when the block is
/// inactive (then `P = 0`).
pub fn lmo_certificate(x: &DensityMatrix, a: &Vector, rho: f64) -> Result<Option<Matrix>> {
    check_inputs(x, a, rho)?;
    let eig = x.eig();
    let weights = x.weights();
    let coeffs = eig.vectors.transpose() * a;
    Ok(block_root(weights.as_slice(), coeffs.as_slice(), rho).map(|root| {
        let p = Vector::from_iterator(
            weights.len(),
            weights
                .iter()
                .zip(root.s.iter())
                .map(|(&w, &sj)| w * sj / root.norm_sq.sqrt()),
        );
        let pv = &eig.vectors * p;
        &pv * pv.transpose()
    }))
}

/// Sum over blocks of `alpha_i` for a density matrix given by its spectrum.
pub(crate) fn primal_from_spectrum(vectors: &Matrix, weights: &[f64], a: &Matrix, rho: f64) -> f64 {
    let coeffs = vectors.transpose() * a;
    coeffs
        .column_iter()
        .filter_map(|c| block_root(weights, c.as_slice(), rho))
        .map(|r| r.alpha)
        .sum()
}

/// Relaxation objective `sum_i Tr(X^{1/2} a_i a_i' X^{1/2} - rho X)_+` at a
/// feasible `X`; any feasible `X` gives a lower bound on `psi(rho)`.
pub fn psi_primal_value(x: &DensityMatrix, a: &FactorMatrix, rho: f64) -> Result<f64> {
    if a.rows() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: a.rows(),
        });
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    let weights = x.weights();
    Ok(primal_from_spectrum(
        &x.eig().vectors,
        weights.as_slice(),
        a.matrix(),
        rho,
    ))
}

/// Dual aggregate `sum_i Y_i` of all block minimizers for the density matrix
/// with eigenvectors `vectors` and eigenvalues `weights`, and the total
/// objective `sum_i alpha_i`.
pub(crate) fn aggregate_blocks(vectors: &Matrix, weights: &[f64], a: &Matrix, rho: f64) -> (Matrix, f64) {
    let n = vectors.nrows();
    let coeffs = vectors.transpose() * a;
    let mut scaled = Matrix::zeros(n, a.ncols());
    let mut total = 0.0;
    for (i, c) in coeffs.column_iter().enumerate() {
        if let Some(root) = block_root(weights, c.as_slice(), rho) {
            total += root.alpha;
            scaled.set_column(i, &(&root.s * (root.alpha / root.norm_sq).sqrt()));
        }
    }
    // W = V S S' V' with S the scaled block coefficients.
    let factor = vectors * scaled;
    let mut w = &factor * factor.transpose();
    crate::linalg::symmetrize(&mut w);
    (w, total)
}

/// `sum_i (B_i)_+ = sum_i (1 - rho/|a_i|^2)_+ a_i a_i'`, a feasible dual point.
pub(crate) fn positive_part_sum(a: &Matrix, rho: f64) -> Matrix {
    let weights = Vector::from_iterator(
        a.ncols(),
        a.column_iter().map(|c| {
            let nsq = c.norm_squared();
            if nsq > rho {
                1.0 - rho / nsq
            } else {
                0.0
            }
        }),
    );
    let mut scaled = a.clone();
    for (mut col, &w) in scaled.column_iter_mut().zip(weights.iter()) {
        col *= w;
    }
    let mut z = scaled * a.transpose();
    crate::linalg::symmetrize(&mut z);
    z
}
