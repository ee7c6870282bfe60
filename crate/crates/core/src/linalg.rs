//! Symmetric-matrix helpers: Moore-Penrose pseudo-inverse and numerical rank.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{NnctError, Result};

/// Generalized inverse used in the overall quadratic forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GInverse {
    /// Invert the nonsingular principal sub-block of the reference cells
    /// (last NN-class column dropped; for column-sum families the last base
    /// class row as well) and zero-fill the rest.
    #[default]
    ReferenceCells,
    /// Moore-Penrose inverse of the full covariance, eigenvalues below
    /// `1e-8 * lambda_max` treated as zero.
    MoorePenrose,
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(NnctError::Argument(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(NnctError::Numeric("matrix has non-finite entries".into()));
    }
    let asym = (a - a.transpose()).amax();
    if asym > 1e-9 * a.amax().max(1.0) {
        return Err(NnctError::Argument(format!("matrix not symmetric (max deviation {asym:e})")));
    }
    Ok(())
}

pub(crate) fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect()
}

/// Moore-Penrose inverse of a symmetric matrix via its eigendecomposition.
/// Eigenvalues with `|lambda| <= tol * max |lambda|` are treated as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    check_symmetric(a)?;
    let k = a.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(a.clone());
    let max_abs = eig.eigenvalues.amax();
    if !max_abs.is_finite() {
        return Err(NnctError::Numeric("eigendecomposition produced non-finite values".into()));
    }
    let cutoff = tol * max_abs;
    let mut out = DMatrix::zeros(k, k);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff && lambda != 0.0 {
            let v = eig.eigenvectors.column(idx);
            out += (v * v.transpose()) / lambda;
        }
    }
    Ok(out)
}

/// Number of eigenvalues above `tol * lambda_max`.
pub fn numerical_rank(a: &DMatrix<f64>, tol: f64) -> Result<usize> {
    check_symmetric(a)?;
    let ev = symmetric_eigenvalues(a);
    let max_abs = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ev.iter().filter(|v| v.abs() > tol * max_abs && max_abs > 0.0).count())
}

/// `x' A x`.
pub(crate) fn quadratic_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = x.len();
    let mut s = 0.0;
    for i in 0..k {
        let mut row = 0.0;
        for j in 0..k {
            row += a[(i, j)] * x[j];
        }
        s += x[i] * row;
    }
    s
}
