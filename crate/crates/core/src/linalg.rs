//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const MAX_CONDITION: f64 = 1e12;

/// Extreme eigenvalues of a Hermitian matrix.
pub fn hermitian_extremes(m: &CMat) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Inverse of a Hermitian positive definite matrix, refusing ill-conditioned input.
pub fn hermitian_inverse(m: &CMat) -> Result<CMat> {
    let (lo, hi) = hermitian_extremes(m);
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(Error::SingularCovariance { cond });
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::SingularCovariance { cond: f64::INFINITY })?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Forces exact Hermitian symmetry, averaging away rounding asymmetry.
pub fn symmetrize(m: &mut CMat) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Moore-Penrose pseudo-inverse via SVD with a relative singular value cutoff.
pub fn pinv(m: &CMat) -> CMat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return CMat::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (r.max(c) as f64) * f64::EPSILON;
    svd.pseudo_inverse(tol).unwrap_or_else(|_| CMat::zeros(c, r))
}

pub fn trace(m: &CMat) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Tr(A B) without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

pub fn frobenius_sqr(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum()
}
