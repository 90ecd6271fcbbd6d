//! Covariance containers, square roots and the Gaussian spike model.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, sym_eig, SymEig};
use crate::rng::{self, StreamRng};
use crate::{Error, Matrix, Result, Vector};

/// Relative tolerance on negative eigenvalues accepted as rounding noise.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Symmetric positive semidefinite covariance matrix.
///
/// Entries are stored exactly symmetric. If the matrix was canonically
/// reordered by decreasing marginal variance, the permutation is kept so that
/// `self.entries()[(i, j)] == original[(perm[i], perm[j])]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: Matrix,
    permutation: Option<Vec<usize>>,
}

impl CovarianceMatrix {
    /// Validates symmetry (to 1e-12 relative) and positive semidefiniteness
    /// (minimum eigenvalue >= -1e-8 * |S|_2), then stores the symmetrized
    /// matrix.
    pub fn new(entries: Matrix) -> Result<Self> {
        let entries = checked_symmetric(entries)?;
        let eig = sym_eig(&entries)?;
        check_psd(&eig)?;
        Ok(Self {
            entries,
            permutation: None,
        })
    }

    /// Diagonal covariance.
    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(variances)))
    }

    pub(crate) fn from_trusted(entries: Matrix) -> Self {
        Self {
            entries,
            permutation: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_entries(self) -> Matrix {
        self.entries
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.entries[(i, i)]
    }

    pub fn variances(&self) -> Vector {
        self.entries.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn min_variance(&self) -> f64 {
        self.variances().min()
    }

    pub fn max_variance(&self) -> f64 {
        self.variances().max()
    }

    /// Permutation applied by [`Self::sorted_by_variance`], if any.
    pub fn permutation(&self) -> Option<&[usize]> {
        self.permutation.as_deref()
    }

    /// Reorders variables so the diagonal is nonincreasing. The sort is
    /// stable, and the permutation is recorded relative to `self`'s
    /// original coordinates.
    pub fn sorted_by_variance(&self) -> Self {
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.variance(j).total_cmp(&self.variance(i)));
        let entries = linalg::principal_submatrix(&self.entries, &order);
        let permutation = match &self.permutation {
            Some(prev) => order.iter().map(|&i| prev[i]).collect(),
            None => order,
        };
        Self {
            entries,
            permutation: Some(permutation),
        }
    }

    /// `P S P'` for the permutation `perm` (new index `i` takes old index
    /// `perm[i]`). The result carries no recorded permutation.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("not a permutation"));
        }
        Ok(Self::from_trusted(linalg::principal_submatrix(&self.entries, perm)))
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self::from_trusted(linalg::principal_submatrix(&self.entries, idx))
    }
}

fn checked_symmetric(mut entries: Matrix) -> Result<Matrix> {
    if !entries.is_square() {
        return Err(Error::DimensionMismatch {
            expected: entries.nrows(),
            found: entries.ncols(),
        });
    }
    if entries.nrows() == 0 {
        return Err(Error::invalid("covariance matrix must be at least 1x1"));
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = entries.amax().max(f64::MIN_POSITIVE);
    if linalg::asymmetry(&entries) > 1e-12 * scale {
        return Err(Error::invalid("covariance matrix is not symmetric"));
    }
    linalg::symmetrize(&mut entries);
    Ok(entries)
}

fn check_psd(eig: &SymEig) -> Result<()> {
    let norm = eig.max().abs().max(eig.min().abs());
    if eig.min() < -PSD_TOLERANCE * norm {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min(),
        });
    }
    Ok(())
}

/// Square root `A` of a covariance, `S = A'A`. Column `a_i` carries the
/// per-variable data of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    a: Matrix,
}

impl FactorMatrix {
    /// Wraps an arbitrary square root. No check against a covariance is done.
    pub fn new(a: Matrix) -> Result<Self> {
        if a.ncols() == 0 || a.nrows() == 0 {
            return Err(Error::invalid("factor matrix must be non-empty"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    /// Number of variables (columns).
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Dimension of the space the columns live in.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn column(&self, i: usize) -> Vector {
        self.a.column(i).into_owned()
    }

    /// `|a_i|^2` for every column.
    pub fn column_norms_sq(&self) -> Vector {
        Vector::from_iterator(self.dim(), self.a.column_iter().map(|c| c.norm_squared()))
    }

    /// `A'A`.
    pub fn gram(&self) -> Matrix {
        let mut g = self.a.transpose() * &self.a;
        linalg::symmetrize(&mut g);
        g
    }

    /// `Q A` for a matrix `Q` with orthonormal columns (another valid root).
    pub fn rotated(&self, q: &Matrix) -> Result<Self> {
        if q.ncols() != self.a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.a.nrows(),
                found: q.ncols(),
            });
        }
        Self::new(q * &self.a)
    }
}

/// Symmetric PSD square root `S^{1/2}` of a covariance matrix.
///
/// Eigenvalues in `[-1e-8 |S|_2, 0)` are clamped to zero; anything more
/// negative is reported as [`Error::NotPsd`].
pub fn factor_root(sigma: &CovarianceMatrix) -> Result<FactorMatrix> {
    let eig = sym_eig(sigma.entries())?;
    check_psd(&eig)?;
    let a = eig.map_spectrum(|v| v.max(0.0).sqrt());
    FactorMatrix::new(a)
}

/// Hypothesis of the spike detection problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    /// `x ~ N(0, I)`.
    H0,
    /// `x ~ N(0, I + theta v v')`.
    H1,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::H0 => "h0",
            Hypothesis::H1 => "h1",
        }
    }
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Configuration of the Gaussian spike model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub m: usize,
    pub k_star: usize,
    pub theta: f64,
    pub delta: f64,
    pub seed: u64,
    /// Unit spike direction with at most `k_star` nonzeros. Defaults to
    /// `1/sqrt(k_star)` on the first `k_star` coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spike_vector: Option<Vec<f64>>,
}

impl ModelConfig {
    pub fn new(n: usize, m: usize, k_star: usize, theta: f64, delta: f64, seed: u64) -> Result<Self> {
        let config = Self {
            n,
            m,
            k_star,
            theta,
            delta,
            seed,
            spike_vector: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_spike(mut self, v: Vec<f64>) -> Result<Self> {
        self.spike_vector = Some(v);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::invalid("n and m must be positive"));
        }
        if self.k_star == 0 || self.k_star > self.n {
            return Err(Error::invalid(format!(
                "k_star = {} must lie in [1, n = {}]",
                self.k_star, self.n
            )));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(Error::invalid(format!(
                "theta = {} must be finite and nonnegative",
                self.theta
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(Error::invalid(format!("delta = {} must lie in (0, 1/2]", self.delta)));
        }
        if let Some(v) = &self.spike_vector {
            if v.len() != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    found: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("spike vector norm {norm} is not 1")));
            }
            let card = v.iter().filter(|&&x| x != 0.0).count();
            if card > self.k_star {
                return Err(Error::invalid(format!(
                    "spike cardinality {card} exceeds k_star = {}",
                    self.k_star
                )));
            }
        }
        Ok(())
    }

    /// The spike direction: the configured one or the default flat spike.
    pub fn spike(&self) -> Vector {
        match &self.spike_vector {
            Some(v) => Vector::from_column_slice(v),
            None => {
                let w = 1.0 / (self.k_star as f64).sqrt();
                Vector::from_fn(self.n, |i, _| if i < self.k_star { w } else { 0.0 })
            }
        }
    }

    /// Aspect ratio `mu = n / m`.
    pub fn mu(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    /// Sparsity ratio `kappa = k_star / n`.
    pub fn kappa(&self) -> f64 {
        self.k_star as f64 / self.n as f64
    }
}

/// `m` sample points in `R^n`, stored as the rows of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Matrix,
    pub hypothesis: Option<Hypothesis>,
}

impl SampleSet {
    pub fn new(points: Matrix, hypothesis: Option<Hypothesis>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::invalid(
                "sample set needs at least one point of positive dimension",
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { points, hypothesis })
    }

    /// Builds a sample set from individual points, checking that every point
    /// has the same dimension.
    pub fn from_points(points: &[Vec<f64>], hypothesis: Option<Hypothesis>) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::invalid("no sample points"))?;
        let n = first.len();
        if let Some(bad) = points.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        let mat = Matrix::from_fn(points.len(), n, |i, j| points[i][j]);
        Self::new(mat, hypothesis)
    }

    pub fn m(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }
}

/// Draws `m` points from the model under `hypothesis`, using the stream
/// `(config.seed, 0)`.
///
/// H0 and H1 consume the generator identically, so with `theta = 0` both
/// hypotheses return the same points for the same seed.
pub fn sample_model(config: &ModelConfig, hypothesis: Hypothesis) -> Result<SampleSet> {
    let mut rng = rng::stream_rng(config.seed, rng::stream_id(rng::domain::SAMPLING, 0, 0));
    sample_model_with(config, hypothesis, &mut rng)
}

/// Same as [`sample_model`] with an explicit generator.
pub fn sample_model_with(config: &ModelConfig, hypothesis: Hypothesis, rng: &mut StreamRng) -> Result<SampleSet> {
    config.validate()?;
    let (n, m) = (config.n, config.m);
    let spike = config.spike();
    let scale = config.theta.sqrt();
    let mut points = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            points[(i, j)] = rng.sample(StandardNormal);
        }
        // x = z + sqrt(theta) g v has covariance I + theta v v'.
        let g: f64 = rng.sample(StandardNormal);
        if hypothesis == Hypothesis::H1 {
            for j in 0..n {
                points[(i, j)] += scale * g * spike[j];
            }
        }
    }
    SampleSet::new(points, Some(hypothesis))
}

/// Sample covariance `(1/m) sum_i x_i x_i'` (no centering).
pub fn sample_covariance(samples: &SampleSet) -> CovarianceMatrix {
    let x = samples.points();
    let mut s = x.transpose() * x / samples.m() as f64;
    linalg::symmetrize(&mut s);
    CovarianceMatrix::from_trusted(s)
}

/// Result of removing variables whose variance is below the penalty.
#[derive(Debug, Clone)]
pub struct Reduction {
    /// Original indices of the kept variables, increasing.
    pub kept: Vec<usize>,
    /// Reduced covariance, `None` when every variable was removed.
    pub sigma: Option<CovarianceMatrix>,
    pub original_dim: usize,
}

impl Reduction {
    pub fn is_empty(&self) -> bool {
        self.sigma.is_none()
    }

    pub fn is_identity(&self) -> bool {
        self.kept.len() == self.original_dim
    }

    /// Maps a vector on the kept variables back to original coordinates.
    pub fn lift(&self, reduced: &Vector) -> Vector {
        let mut out = Vector::zeros(self.original_dim);
        for (r, &i) in self.kept.iter().enumerate() {
            out[i] = reduced[r];
        }
        out
    }

    /// Maps reduced indices to original ones.
    pub fn lift_support(&self, support: &[usize]) -> Vec<usize> {
        support.iter().map(|&r| self.kept[r]).collect()
    }
}

/// Removes every variable with `S_ii < rho`; such a variable never enters an
/// optimal support of the penalized problem.
pub fn preprocess_eliminate(sigma: &CovarianceMatrix, rho: f64) -> Result<Reduction> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho = {rho} must be positive")));
    }
    let kept: Vec<usize> = (0..sigma.dim()).filter(|&i| sigma.variance(i) >= rho).collect();
    let reduced = if kept.is_empty() {
        None
    } else if kept.len() == sigma.dim() {
        Some(CovarianceMatrix::from_trusted(sigma.entries().clone()))
    } else {
        Some(sigma.submatrix(&kept))
    };
    Ok(Reduction {
        kept,
        sigma: reduced,
        original_dim: sigma.dim(),
    })
}
