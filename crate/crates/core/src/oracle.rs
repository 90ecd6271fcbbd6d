//! Exhaustive solvers for sparse eigenvalues and the penalized objective.
//!
//! These enumerate supports and are exact up to the dense eigensolver. They
//! exist to give ground truth on small instances; larger requests fail with
//! [`Error::EnumerationCap`] instead of silently truncating.

use itertools::Itertools;

use crate::linalg::{principal_submatrix, sym_eig};
use crate::model::CovarianceMatrix;
use crate::{Error, Matrix, Result, Vector};

/// Maximum number of supports any oracle call may enumerate.
pub const ENUMERATION_CAP: u128 = 2_000_000;

/// Values closer than this (relative) are treated as ties.
const TIE_TOLERANCE: f64 = 1e-12;

/// A unit vector supported on `support` and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub value: f64,
    /// Increasing indices.
    pub support: Vec<usize>,
    pub vector: Vector,
}

impl SparseSolution {
    pub fn cardinality(&self) -> usize {
        self.support.len()
    }

    /// `x' S x` for the stored vector.
    pub fn rayleigh(&self, sigma: &Matrix) -> f64 {
        (self.vector.transpose() * sigma * &self.vector)[(0, 0)]
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn check_cap(required: u128) -> Result<()> {
    if required > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            required,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

/// Top eigenpair of the principal submatrix on `support`, lifted to `R^n`.
fn top_pair(sigma: &Matrix, support: &[usize]) -> (f64, Vector) {
    let sub = principal_submatrix(sigma, support);
    let eig = sym_eig(&sub).expect("principal submatrix of a valid covariance");
    let mut v = Vector::zeros(sigma.nrows());
    let top = eig.top_vector();
    for (r, &i) in support.iter().enumerate() {
        v[i] = top[r];
    }
    (eig.max(), v)
}

/// Running maximum with lexicographic tie-breaking on supports.
struct Best {
    value: f64,
    support: Vec<usize>,
    vector: Vector,
}

impl Best {
    fn offer(slot: &mut Option<Best>, value: f64, support: &[usize], vector: impl FnOnce() -> Vector) {
        let better = match slot {
            None => true,
            Some(b) => {
                let tol = TIE_TOLERANCE * b.value.abs().max(1.0);
                value > b.value + tol || (value >= b.value - tol && support < b.support.as_slice())
            }
        };
        if better {
            *slot = Some(Best {
                value,
                support: support.to_vec(),
                vector: vector(),
            });
        }
    }

    fn into_solution(self) -> SparseSolution {
        SparseSolution {
            value: self.value,
            support: self.support,
            vector: self.vector,
        }
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in [1, {n}]")));
    }
    Ok(())
}

fn max_over_size_k(sigma: &Matrix, k: usize) -> SparseSolution {
    let n = sigma.nrows();
    let mut best: Option<Best> = None;
    for support in (0..n).combinations(k) {
        let (value, vector) = top_pair(sigma, &support);
        Best::offer(&mut best, value, &support, || vector);
    }
    best.expect("at least one support").into_solution()
}

/// `lambda_max^k(S)`: the largest `x' S x` over unit `x` with at most `k`
/// nonzeros.
///
/// Only supports of size exactly `k` are enumerated: `lambda_max` of a
/// principal submatrix never decreases when the support grows. The returned
/// support therefore has size `k`, while the vector may vanish on some of it.
pub fn sparse_lambda_max_exact(sigma: &CovarianceMatrix, k: usize) -> Result<SparseSolution> {
    let n = sigma.dim();
    check_k(n, k)?;
    check_cap(binomial(n, k))?;
    Ok(max_over_size_k(sigma.entries(), k))
}

/// `lambda_min^k(S)` through `lambda_max(S) - lambda_max^k(lambda_max(S) I - S)`,
/// cross-checked against a direct enumeration of minimum eigenvalues.
pub fn sparse_lambda_min_exact(sigma: &CovarianceMatrix, k: usize) -> Result<SparseSolution> {
    let n = sigma.dim();
    check_k(n, k)?;
    check_cap(2 * binomial(n, k))?;
    let s = sigma.entries();
    let top = sym_eig(s)?.max();
    let shifted = Matrix::identity(n, n) * top - s;
    let flipped = max_over_size_k(&shifted, k);
    let value = top - flipped.value;

    let direct = (0..n)
        .combinations(k)
        .map(|support| sym_eig(&principal_submatrix(s, &support)).map(|e| e.min()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if (direct - value).abs() > 1e-10 * top.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "sparse minimum eigenvalue paths disagree: identity {value}, direct {direct}"
        )));
    }
    Ok(SparseSolution {
        value,
        support: flipped.support,
        vector: flipped.vector,
    })
}

/// `phi(rho) = max_S lambda_max(S_S) - rho |S|` over all nonempty supports.
pub fn phi_exact(sigma: &CovarianceMatrix, rho: f64) -> Result<SparseSolution> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    let n = sigma.dim();
    if n >= 127 {
        return Err(Error::EnumerationCap {
            required: u128::MAX,
            cap: ENUMERATION_CAP,
        });
    }
    check_cap((1u128 << n) - 1)?;
    let s = sigma.entries();
    let mut best: Option<Best> = None;
    for k in 1..=n {
        for support in (0..n).combinations(k) {
            let (lam, vector) = top_pair(s, &support);
            Best::offer(&mut best, lam - rho * k as f64, &support, || vector);
        }
    }
    Ok(best.expect("n >= 1").into_solution())
}

/// `sum_i ((a_i' x)^2 - rho)_+` for the columns of a square root `A`. Its
/// maximum over unit `x` is `phi(rho)`, attained at `x = A z / |A z|` for an
/// optimal sparse `z`.
pub fn penalized_objective(a: &Matrix, x: &Vector, rho: f64) -> f64 {
    a.column_iter().map(|col| (col.dot(x).powi(2) - rho).max(0.0)).sum()
}
