//! Small dense linear-algebra helpers shared by the samplers and the
//! conjugate updates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Eigenvalues above `-EIGEN_TOL` (scaled by the matrix magnitude) are
/// treated as zero.
pub const EIGEN_TOL: f64 = 1e-10;

/// Maximum tolerated `|M - Mᵀ|` entry for a matrix to count as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn tolerance_for(m: &DMatrix<f64>) -> f64 {
    EIGEN_TOL * m.amax().max(1.0)
}

/// Validates that `m` is square, symmetric and positive semi-definite.
pub fn check_psd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
            context,
        });
    }
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let min = eig.eigenvalues.min();
    if min < -tolerance_for(m) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// Returns `L` with `L Lᵀ = m`, built from the eigendecomposition so that
/// singular PSD matrices (including the zero matrix) are handled.
pub fn psd_sqrt_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let tol = tolerance_for(m);
    let mut scales = DVector::zeros(n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -tol {
            return Err(Error::NotPsd { min_eigenvalue: lambda });
        }
        scales[i] = lambda.max(0.0).sqrt();
    }
    let mut factor = eig.eigenvectors;
    for (j, s) in scales.iter().enumerate() {
        factor.column_mut(j).scale_mut(*s);
    }
    Ok(factor)
}

/// Draws `x ~ N(mean, L Lᵀ)` given a square-root factor `L`.
pub fn sample_with_factor<R: Rng + ?Sized>(mean: &DVector<f64>, factor: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + factor * z
}

/// Cholesky factor if `m` is numerically positive definite, otherwise the
/// eigen square root. Both give the same Gaussian law.
pub fn sampling_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match Cholesky::new(symmetrize(m)) {
        Some(chol) => Ok(chol.l()),
        None => psd_sqrt_factor(m),
    }
}

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::numeric(format!("{what} is not positive definite")))
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, what)?.inverse()))
}

pub fn is_diagonal(m: &DMatrix<f64>) -> bool {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

pub fn outer(a: &DVector<f64>) -> DMatrix<f64> {
    a * a.transpose()
}
