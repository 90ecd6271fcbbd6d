use super::{DensityMatrix, SmoothingParams};
use crate::linalg::{sym_eig, SymEig};
use crate::{Matrix, Result, Vector};

/// Solution of the spectral problem behind the smoothed `lambda_max`:
///
/// ```text
/// max  y'x - beta (sum_i x_i log x_i + log n)   s.t.  1'x = 1,  x >= eps/n
/// ```
#[derive(Debug, Clone)]
pub struct WaterFill {
    /// Optimal `x`, in the order of the input `y`.
    pub weights: Vector,
    /// Multiplier with `x_i = max(eps/n, exp((y_i + lambda)/beta - 1))`.
    pub lambda: f64,
    /// Optimal value.
    pub value: f64,
}

/// Solves the floor-constrained entropy problem exactly.
///
/// Writing `x_i = max(floor, exp(s + t_i))` with `t_i = (y_i - max y)/beta`,
/// the normalization is piecewise `e^s E_j + (n - j) floor = 1` where the top
/// `j` entries sit above the floor. The active count is found by a scan, so
/// the multiplier comes out in closed form rather than by bisection.
pub fn water_fill(y: &[f64], params: &SmoothingParams) -> WaterFill {
    let n = y.len();
    debug_assert_eq!(n, params.n);
    let beta = params.beta;
    let floor = params.floor;
    let ln_floor = floor.ln();

    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut t: Vec<f64> = y.iter().map(|&v| (v - y_max) / beta).collect();
    t.sort_by(|a, b| b.total_cmp(a));

    let mut partial = 0.0;
    let mut s = 0.0;
    for j in 1..=n {
        partial += t[j - 1].exp();
        let rest = (n - j) as f64 * floor;
        s = ((1.0 - rest) / partial).ln();
        if j == n || s + t[j] <= ln_floor {
            break;
        }
    }

    let weights = Vector::from_iterator(n, y.iter().map(|&v| floor.max((s + (v - y_max) / beta).exp())));
    let lambda = beta * (s + 1.0) - y_max;
    let sum: f64 = weights.sum();
    let entropy: f64 = weights.iter().map(|&x| x * x.ln()).sum();
    let linear: f64 = weights.iter().zip(y).map(|(x, v)| x * v).sum();
    // Lagrangian form: stationary in lambda, so normalization error is
    // second order in the value.
    let value = linear - beta * (entropy + (n as f64).ln()) + lambda * (sum - 1.0);
    WaterFill { weights, lambda, value }
}

pub(crate) fn smooth_spectrum(z: &Matrix, params: &SmoothingParams) -> Result<(SymEig, WaterFill)> {
    if z.nrows() != params.n {
        return Err(crate::Error::DimensionMismatch {
            expected: params.n,
            found: z.nrows(),
        });
    }
    let eig = sym_eig(z)?;
    let fill = water_fill(eig.values.as_slice(), params);
    Ok((eig, fill))
}

/// Entropy-smoothed maximum eigenvalue
///
/// ```text
/// f(Z) = max { Tr(Z X) - (eps/log n)(Tr(X log X) + log n) : Tr X = 1, X >= (eps/n) I }
/// ```
///
/// For `Tr Z >= 0` (in particular PSD `Z`), `(1-eps) lambda_max(Z) - eps <= f(Z) <= lambda_max(Z)`.
pub fn smooth_value(z: &Matrix, params: &SmoothingParams) -> Result<f64> {
    Ok(smooth_spectrum(z, params)?.1.value)
}

/// Gradient of [`smooth_value`], which is also its maximizer `X`.
pub fn smooth_grad(z: &Matrix, params: &SmoothingParams) -> Result<DensityMatrix> {
    let (eig, fill) = smooth_spectrum(z, params)?;
    Ok(DensityMatrix::from_spectrum(eig.vectors, fill.weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lambda_max;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> Matrix {
        let g = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&g + g.transpose()) * 0.5
    }

    /// Direct maximization of the spectral problem by bisection on the
    /// multiplier, independent of the active-set scan.
    fn bisection_fill(y: &[f64], p: &SmoothingParams) -> Vec<f64> {
        let x_of = |lam: f64| -> Vec<f64> {
            y.iter()
                .map(|&v| p.floor.max(((v + lam) / p.beta - 1.0).exp()))
                .collect()
        };
        let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (-ymax - 50.0, -ymax + p.beta);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if x_of(mid).iter().sum::<f64>() > 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        x_of(0.5 * (lo + hi))
    }

    #[test]
    fn zero_and_identity() {
        let p = SmoothingParams::new(8, 0.1).unwrap();
        assert!(smooth_value(&Matrix::zeros(8, 8), &p).unwrap().abs() < 1e-15);
        assert!((smooth_value(&Matrix::identity(8, 8), &p).unwrap() - 1.0).abs() < 1e-15);
        let x = smooth_grad(&Matrix::identity(8, 8), &p).unwrap();
        assert!((x.matrix() - Matrix::identity(8, 8) / 8.0).amax() < 1e-15);
    }

    #[test]
    fn large_gap_saturates_floor() {
        let p = SmoothingParams::new(10, 0.1).unwrap();
        let mut y = vec![0.0; 10];
        y[0] = 10.0;
        let fill = water_fill(&y, &p);
        let want_top = 1.0 - 9.0 * 0.01;
        assert!((fill.weights[0] - want_top).abs() < 1e-12);
        for i in 1..10 {
            assert!((fill.weights[i] - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_bisection_and_normalizes() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        for &eps in &[0.5, 0.05, 0.001] {
            let p = SmoothingParams::new(30, eps).unwrap();
            for _ in 0..20 {
                let y: Vec<f64> = (0..30).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let fill = water_fill(&y, &p);
                assert!((fill.weights.sum() - 1.0).abs() <= 1e-12);
                assert!(fill.weights.iter().all(|&x| x >= p.floor));
                let reference = bisection_fill(&y, &p);
                for (a, b) in fill.weights.iter().zip(&reference) {
                    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn sandwich_on_psd() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let p = SmoothingParams::new(50, 0.05).unwrap();
        for _ in 0..20 {
            let g = random_symmetric(50, &mut rng);
            let z = &g * &g / 50.0;
            let f = smooth_value(&z, &p).unwrap();
            let lam = lambda_max(&z).unwrap();
            assert!(f <= lam + 1e-12);
            assert!(f >= (1.0 - p.epsilon) * lam - p.epsilon - 1e-12);
        }
    }

    #[test]
    fn finite_difference_gradient() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let p = SmoothingParams::new(12, 0.1).unwrap();
        for _ in 0..10 {
            let z = random_symmetric(12, &mut rng);
            let h = random_symmetric(12, &mut rng);
            let t = 1e-5;
            let fd =
                (smooth_value(&(&z + &h * t), &p).unwrap() - smooth_value(&(&z - &h * t), &p).unwrap()) / (2.0 * t);
            let x = smooth_grad(&z, &p).unwrap();
            let analytic = x.matrix().component_mul(&h).sum();
            assert!((fd - analytic).abs() <= 1e-4 * h.norm(), "{fd} vs {analytic}");
        }
    }

    #[test]
    fn convex_midpoint() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(10);
        let p = SmoothingParams::new(15, 0.05).unwrap();
        for _ in 0..20 {
            let a = random_symmetric(15, &mut rng);
            let b = random_symmetric(15, &mut rng);
            let mid = smooth_value(&((&a + &b) * 0.5), &p).unwrap();
            let avg = 0.5 * (smooth_value(&a, &p).unwrap() + smooth_value(&b, &p).unwrap());
            assert!(mid <= avg + 1e-10);
        }
    }

    #[test]
    fn gradient_satisfies_density_invariants() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let p = SmoothingParams::new(20, 0.02).unwrap();
        let z = random_symmetric(20, &mut rng) * 10.0;
        let x = smooth_grad(&z, &p).unwrap();
        assert!((x.matrix().trace() - 1.0).abs() < 1e-10);
        let direct = crate::linalg::lambda_min(x.matrix()).unwrap();
        assert!(direct >= p.floor - 1e-10);
    }
}
