//! Dense Hermitian helpers shared by the projection and subspace code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// `(H + H^H) / 2`.
pub fn hermitian_part(h: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (h + h.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn is_finite(h: &DMatrix<Complex64>) -> bool {
    h.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Eigendecomposition of the Hermitian part of `h`.
pub fn hermitian_eigen(h: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of a {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    if !is_finite(h) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let sym = hermitian_part(h);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("QR iteration did not converge".into()))?;

    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// `Σ_k max(λ_k, 0) v_k v_k^H`.
pub fn clamp_negative(eig: &HermitianEigen) -> DMatrix<Complex64> {
    let n = eig.values.len();
    let keep: Vec<usize> = (0..n).filter(|&k| eig.values[k] > 0.0).collect();
    let mut w = DMatrix::zeros(n, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        let s = Complex64::new(eig.values[k].sqrt(), 0.0);
        w.set_column(j, &(eig.vectors.column(k) * s));
    }
    &w * w.adjoint()
}

/// Cholesky test on a Hermitian matrix; only the lower triangle is read.
pub fn is_positive_definite(h: &DMatrix<Complex64>) -> bool {
    let n = h.nrows();
    let mut l = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = h[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return false;
        }
        let d = pivot.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut v = h[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / d;
        }
    }
    true
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(h: &DMatrix<Complex64>) -> Result<f64> {
    let eig = hermitian_eigen(h)?;
    Ok(eig.values.iter().copied().fold(f64::INFINITY, f64::min))
}
