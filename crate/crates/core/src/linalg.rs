//! Dense symmetric linear algebra helpers on top of `nalgebra`.

use nalgebra::SymmetricEigen;

use crate::{Error, Matrix, Result, Vector};

/// Eigendecomposition `S = V diag(values) V'` with eigenvalues sorted in
/// decreasing order and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vector,
    pub vectors: Matrix,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Leading unit eigenvector.
    pub fn top_vector(&self) -> Vector {
        self.vectors.column(0).into_owned()
    }

    /// Rebuilds `V diag(f(values)) V'`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let weights = self.values.map(f);
        spectral_product(&self.vectors, &weights)
    }
}

/// Forms `V diag(w) V'` and symmetrizes the result.
pub fn spectral_product(vectors: &Matrix, weights: &Vector) -> Matrix {
    let mut scaled = vectors.clone();
    for (mut col, &w) in scaled.column_iter_mut().zip(weights.iter()) {
        col *= w;
    }
    let mut out = &scaled * vectors.transpose();
    symmetrize(&mut out);
    out
}

/// Symmetric eigendecomposition, eigenvalues in decreasing order.
///
/// Only the lower triangle is read; callers are expected to pass a symmetric
/// matrix.
pub fn sym_eig(s: &Matrix) -> Result<SymEig> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch {
            expected: s.nrows(),
            found: s.ncols(),
        });
    }
    if s.nrows() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let eig = SymmetricEigen::new(s.clone());
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

pub fn lambda_max(s: &Matrix) -> Result<f64> {
    Ok(sym_eig(s)?.max())
}

pub fn lambda_min(s: &Matrix) -> Result<f64> {
    Ok(sym_eig(s)?.min())
}

/// Replaces `s` by `(s + s') / 2`.
pub fn symmetrize(s: &mut Matrix) {
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
}

/// Largest absolute asymmetry `max |s_ij - s_ji|`.
pub fn asymmetry(s: &Matrix) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

/// Principal submatrix on the given index set.
pub fn principal_submatrix(s: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |i, j| s[(idx[i], idx[j])])
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm_sym(s: &Matrix) -> Result<f64> {
    let eig = sym_eig(s)?;
    Ok(eig.max().abs().max(eig.min().abs()))
}
