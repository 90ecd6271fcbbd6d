//! Approximation ratios between the relaxation and the penalized problem.
//!
//! Randomized rounding of an optimal `X` of rank `r` shows
//!
//! ```text
//! n rho theta_r(psi / (n rho)) <= phi(rho) <= psi(rho),
//! theta_r(x) = E[(x xi_1^2 - (xi_2^2 + ... + xi_r^2)/(r-1))_+],
//! ```
//!
//! with `xi` standard Gaussian. `theta_r` is estimated by Monte Carlo; its
//! limit as `r -> inf`, `theta(x) = E[(x xi^2 - 1)_+]`, has a closed form and
//! is a lower bound for every `r`.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{principal_submatrix, sym_eig};
use crate::model::{CovarianceMatrix, FactorMatrix};
use crate::oracle::SparseSolution;
use crate::relax::{solve_psi_covariance, CovarianceSolve, DensityMatrix, SolveOptions};
use crate::rng::{domain, stream_id, stream_rng};
use crate::special::{gaussian_cdf, gaussian_pdf};
use crate::{Error, Matrix, Result, Vector};

/// Smallest Monte Carlo budget accepted for `theta_r`.
pub const MIN_MC_SAMPLES: usize = 10_000;

/// Samples per independent stream; fixes the reduction order so estimates do
/// not depend on the thread count.
const CHUNK: usize = 1 << 16;

/// `theta(x) = E[(x xi^2 - 1)_+] = 2 sqrt(x) N'(x^{-1/2}) + 2 (x - 1) N(-x^{-1/2})`,
/// with `N` the standard Gaussian CDF. For large `x`,
/// `theta(x)/x = 1 - 1/x + (4/3) (2 pi)^{-1/2} x^{-3/2} + O(x^{-2})`.
pub fn vartheta(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("theta(x) needs finite x >= 0, got {x}")));
    }
    if x < 1e-12 {
        return Ok(0.0);
    }
    let s = x.sqrt();
    Ok(2.0 * s * gaussian_pdf(1.0 / s) + 2.0 * (x - 1.0) * gaussian_cdf(-1.0 / s))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte Carlo settings for `theta_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioFunctions {
    pub mc_samples: usize,
    pub seed: u64,
}

impl RatioFunctions {
    pub fn new(mc_samples: usize, seed: u64) -> Result<Self> {
        if mc_samples < MIN_MC_SAMPLES {
            return Err(Error::invalid(format!(
                "mc_samples = {mc_samples} is below the minimum of {MIN_MC_SAMPLES}"
            )));
        }
        Ok(Self { mc_samples, seed })
    }

    /// Estimates `theta_r(x)`. The same seed reuses the same Gaussian draws
    /// for every `x`, so estimated curves are monotone and convex in `x`.
    pub fn vartheta_r(&self, x: f64, r: usize) -> Result<McEstimate> {
        if r < 2 {
            return Err(Error::invalid(format!("theta_r needs r >= 2, got {r}")));
        }
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::invalid(format!("theta_r(x) needs finite x >= 0, got {x}")));
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::invalid(format!("mc_samples = {} is too small", self.mc_samples)));
        }
        let chi = ChiSquared::new((r - 1) as f64).map_err(|e| Error::invalid(e.to_string()))?;
        let scale = 1.0 / (r - 1) as f64;
        let chunks = self.mc_samples.div_ceil(CHUNK);
        let partial: Vec<(f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let len = CHUNK.min(self.mc_samples - c * CHUNK);
                let mut rng = stream_rng(
                    self.seed,
                    stream_id(domain::MONTE_CARLO, c as u32, r.min(u16::MAX as usize) as u16),
                );
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..len {
                    let g: f64 = rng.sample(StandardNormal);
                    let rest = chi.sample(&mut rng) * scale;
                    let v = (x * g * g - rest).max(0.0);
                    sum += v;
                    sum_sq += v * v;
                }
                (sum, sum_sq)
            })
            .collect();
        let (sum, sum_sq) = partial.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        let count = self.mc_samples as f64;
        let mean = sum / count;
        let var = ((sum_sq / count - mean * mean) * count / (count - 1.0)).max(0.0);
        Ok(McEstimate {
            estimate: mean,
            std_error: (var / count).sqrt(),
        })
    }
}

/// Both sides of `n rho theta_r(psi/(n rho)) <= phi(rho) <= psi(rho)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichCertificate {
    /// `n rho theta_r(psi/(n rho))`, a lower bound on `phi(rho)`.
    pub lower: f64,
    /// Monte Carlo standard error of `lower`.
    pub lower_std_error: f64,
    /// Relaxation value used for the bound.
    pub relaxation: f64,
    /// Best value found by randomized rounding, if rounding was run.
    pub rounded_value: Option<f64>,
    pub rho: f64,
    pub r: usize,
    pub n: usize,
}

impl SandwichCertificate {
    /// `lower <= relaxation` and `rounded <= relaxation` within `tol`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let rounded_ok = self.rounded_value.is_none_or(|v| v <= self.relaxation + tol);
        self.lower <= self.relaxation + tol && rounded_ok
    }
}

/// Lower bound on `phi(rho)` from a relaxation value `psi` attained by an
/// `X` of rank `r` in dimension `n`. Rank one is bounded with `r = 2`, which
/// can only lower the estimate.
pub fn sandwich(psi: f64, n: usize, rho: f64, r: usize, cfg: &RatioFunctions) -> Result<SandwichCertificate> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    if !(psi >= 0.0) || !psi.is_finite() {
        return Err(Error::invalid(format!("psi = {psi} must be finite and nonnegative")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let r = r.max(2);
    let scale = n as f64 * rho;
    let est = cfg.vartheta_r(psi / scale, r)?;
    Ok(SandwichCertificate {
        lower: scale * est.estimate,
        lower_std_error: scale * est.std_error,
        relaxation: psi,
        rounded_value: None,
        rho,
        r,
        n,
    })
}

/// Value of the relaxation objective at `X = I/n`, divided by `n rho`:
/// `(Tr S - n rho) / (n^2 rho)`. A lower bound on `psi(rho)/(n rho)`.
pub fn naive_ratio_floor(sigma: &CovarianceMatrix, rho: f64) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    if rho > sigma.min_variance() {
        return Err(Error::invalid(format!(
            "rho = {rho} exceeds the smallest variance {}",
            sigma.min_variance()
        )));
    }
    let n = sigma.dim() as f64;
    Ok((sigma.trace() - n * rho) / (n * n * rho))
}

fn support_value(gram: &Matrix, support: &[usize], rho: f64) -> Result<(f64, Vector)> {
    let sub = principal_submatrix(gram, support);
    let eig = sym_eig(&sub)?;
    Ok((eig.max() - rho * support.len() as f64, eig.top_vector()))
}

/// Randomized rounding of a feasible `X`.
///
/// Each trial draws `xi ~ N(0, I)` and keeps variable `i` iff
/// `xi' X^{1/2} B_i X^{1/2} xi > 0`, i.e. `(a_i' X^{1/2} xi)^2 > rho |X^{1/2} xi|^2`.
/// Distinct supports are scored by `lambda_max(S_SS) - rho |S|`; the best one
/// is returned, so the value is always achievable in the penalized problem.
/// When every trial selects nothing, the best single variable is returned.
pub fn randomized_round(
    x: &DensityMatrix,
    a: &FactorMatrix,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<SparseSolution> {
    let n = a.dim();
    if x.dim() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: x.dim(),
        });
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    let half = x.sqrt();
    let mut rng = stream_rng(seed, stream_id(domain::ROUNDING, 0, 0));
    let xi = Matrix::from_fn(x.dim(), trials, |_, _| rng.sample(StandardNormal));
    let u = &half * xi;
    let proj = a.matrix().transpose() * &u;

    let mut supports = BTreeSet::new();
    for t in 0..trials {
        let norm_sq = u.column(t).norm_squared();
        let support: Vec<usize> = (0..n).filter(|&i| proj[(i, t)].powi(2) > rho * norm_sq).collect();
        if !support.is_empty() {
            supports.insert(support);
        }
    }

    let gram = a.gram();
    let mut best: Option<(f64, Vec<usize>, Vector)> = None;
    // BTreeSet iterates in lexicographic order, so strict improvement keeps
    // the smallest support among ties.
    for support in supports {
        let (value, v) = support_value(&gram, &support, rho)?;
        if best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, support, v));
        }
    }
    let (value, support, v) = match best {
        Some(b) => b,
        None => {
            let norms = a.column_norms_sq();
            let i = (0..n).fold(0, |b, i| if norms[i] > norms[b] { i } else { b });
            let (value, v) = support_value(&gram, &[i], rho)?;
            (value, vec![i], v)
        }
    };
    let mut vector = Vector::zeros(n);
    for (k, &i) in support.iter().enumerate() {
        vector[i] = v[k];
    }
    debug_assert!((vector.norm() - 1.0).abs() < 1e-10);
    Ok(SparseSolution { value, support, vector })
}

/// Solve, bound and round in one call, in original coordinates.
#[derive(Debug, Clone)]
pub struct Certification {
    pub solve: CovarianceSolve,
    pub certificate: SandwichCertificate,
    /// Rounded solution with support in original indices.
    pub rounded: SparseSolution,
}

/// Solves the relaxation on the reduced problem, evaluates the sandwich at
/// the certified lower value and the reduced dimension, and rounds the final
/// iterate.
pub fn certify(
    sigma: &CovarianceMatrix,
    rho: f64,
    opts: &SolveOptions,
    cfg: &RatioFunctions,
    round_trials: usize,
    seed: u64,
) -> Result<Certification> {
    let solve = solve_psi_covariance(sigma, rho, opts)?;
    let reduced = solve.reduction.sigma.as_ref().expect("nonempty after solve");
    let a = crate::model::factor_root(reduced)?;
    let r = &solve.result;
    let mut certificate = sandwich(r.psi_lower.max(0.0), reduced.dim(), rho, r.rank, cfg)?;
    certificate.relaxation = r.psi_upper;
    let rounded = randomized_round(&r.x_final, &a, rho, round_trials, seed)?;
    certificate.rounded_value = Some(rounded.value);
    let rounded = SparseSolution {
        value: rounded.value,
        support: solve.reduction.lift_support(&rounded.support),
        vector: solve.reduction.lift(&rounded.vector),
    };
    Ok(Certification {
        solve,
        certificate,
        rounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::factor_root;
    use crate::oracle::phi_exact;
    use rand::SeedableRng;

    fn cfg() -> RatioFunctions {
        RatioFunctions::new(200_000, 7).unwrap()
    }

    #[test]
    fn vartheta_values() {
        assert_eq!(vartheta(0.0).unwrap(), 0.0);
        assert!(vartheta(-1.0).is_err());
        let want = 2.0 * (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((vartheta(1.0).unwrap() - want).abs() < 1e-15);
        assert!((vartheta(1.0).unwrap() - 0.4839).abs() < 1e-4);
        let x: f64 = 100.0;
        let expansion = 1.0 - 1.0 / x + 4.0 / 3.0 / (2.0 * std::f64::consts::PI).sqrt() * x.powf(-1.5);
        assert!((vartheta(x).unwrap() / x - expansion).abs() < 1e-4);
        // E[(x xi^2 - 1)_+] >= E[x xi^2 - 1] = x - 1.
        for x in [1.5, 2.0, 5.0, 30.0] {
            assert!(vartheta(x).unwrap() >= x - 1.0);
        }
        assert!((vartheta(1e4).unwrap() / 1e4 - 1.0).abs() < 0.01);
    }

    #[test]
    fn vartheta_convex_monotone_and_below_identity() {
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.025).collect();
        let v: Vec<f64> = grid.iter().map(|&x| vartheta(x).unwrap()).collect();
        for i in 1..v.len() {
            assert!(v[i] >= v[i - 1]);
            assert!(v[i] <= grid[i]);
        }
        for i in 1..v.len() - 1 {
            assert!(v[i + 1] - 2.0 * v[i] + v[i - 1] >= -1e-10);
        }
    }

    #[test]
    fn vartheta_r_basics() {
        let c = cfg();
        assert!(c.vartheta_r(1.0, 1).is_err());
        assert!(RatioFunctions::new(100, 0).is_err());
        assert_eq!(c.vartheta_r(0.0, 5).unwrap().estimate, 0.0);
        let a = c.vartheta_r(0.7, 5).unwrap();
        let b = c.vartheta_r(0.7, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vartheta_r_dominates_vartheta() {
        let c = cfg();
        for &r in &[3, 5, 10, 50] {
            for i in 0..=8 {
                let x = 0.25 * i as f64;
                let e = c.vartheta_r(x, r).unwrap();
                assert!(vartheta(x).unwrap() <= e.estimate + 3.0 * e.std_error, "r={r} x={x}");
            }
        }
        let e = c.vartheta_r(1.0, 200).unwrap();
        assert!((e.estimate - vartheta(1.0).unwrap()).abs() <= 3.0 * e.std_error + 2e-3);
    }

    #[test]
    fn naive_floor() {
        let id2 = CovarianceMatrix::new(Matrix::identity(2, 2)).unwrap();
        assert!((naive_ratio_floor(&id2, 0.5).unwrap() - 0.5).abs() < 1e-15);
        let s = CovarianceMatrix::new(Matrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, 0.0, 0.3, 1.5, 0.2, 0.0, 0.2, 1.0],
        ))
        .unwrap();
        let rho = s.trace() / 12.0;
        assert!((naive_ratio_floor(&s, rho).unwrap() - 1.0).abs() < 1e-14);
        assert!(naive_ratio_floor(&s, 1.2).is_err());
    }

    #[test]
    fn rounding_identity_rank_one() {
        let id = CovarianceMatrix::new(Matrix::identity(4, 4)).unwrap();
        let a = factor_root(&id).unwrap();
        let mut e1 = Vector::zeros(4);
        e1[0] = 1.0;
        let x = DensityMatrix::rank_one(&e1).unwrap();
        let sol = randomized_round(&x, &a, 0.3, 50, 3).unwrap();
        assert_eq!(sol.support, vec![0]);
        assert!((sol.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rounding_below_oracle_and_sandwich_chain() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(61);
        for n in [5, 7, 9] {
            let g = Matrix::from_fn(n + 1, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = CovarianceMatrix::new(g.transpose() * g / (n + 1) as f64).unwrap();
            let rho = 0.4 * s.min_variance();
            let tol = 1e-2;
            let opts = SolveOptions {
                epsilon: None,
                tol,
                max_iter: 20_000,
            };
            let cert = certify(&s, rho, &opts, &cfg(), 1000, 5).unwrap();
            let phi = phi_exact(&s, rho).unwrap().value;
            let c = &cert.certificate;
            assert!(cert.rounded.value <= phi + 1e-8);
            assert!(c.lower - 3.0 * c.lower_std_error <= phi);
            assert!(phi <= c.relaxation + tol);
            assert!(c.is_consistent(tol));
            assert!((cert.rounded.vector.norm() - 1.0).abs() < 1e-10);
            assert!(cert.rounded.value + 3.0 * c.lower_std_error >= c.lower);
        }
    }

    #[test]
    fn zero_relaxation_gives_zero_lower() {
        let c = sandwich(0.0, 5, 0.2, 3, &cfg()).unwrap();
        assert_eq!(c.lower, 0.0);
        assert!(sandwich(-1.0, 5, 0.2, 3, &cfg()).is_err());
    }
}
