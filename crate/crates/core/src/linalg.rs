//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type C64 = Complex64;

pub fn identity(m: usize) -> CMat {
    CMat::identity(m, m)
}

pub fn scalar(m: usize, c: f64) -> CMat {
    CMat::from_diagonal_element(m, m, C64::new(c, 0.0))
}

pub fn diagonal(values: &[f64]) -> CMat {
    let m = values.len();
    let mut out = CMat::zeros(m, m);
    for (i, &v) in values.iter().enumerate() {
        out[(i, i)] = C64::new(v, 0.0);
    }
    out
}

/// Euclidean norm of a complex vector.
pub fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn matvec(a: &CMat, v: &[C64]) -> Vec<C64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum()).collect()
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.nrows() == 1 && a.ncols() == 1 {
        return a[(0, 0)].norm();
    }
    a.clone().singular_values().iter().fold(0.0f64, |acc, &s| acc.max(s))
}

/// Hermitian part `(A + A*)/2`, used to clean rounding before an eigendecomposition.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_spectrum(a: &CMat) -> Vec<f64> {
    let eig = hermitian_part(a).symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| x.total_cmp(y));
    vals
}

/// `A^power` for Hermitian nonnegative `A`. Negative powers require a positive spectrum.
pub fn hermitian_power(a: &CMat, power: f64) -> Result<CMat> {
    let m = a.nrows();
    if m == 1 {
        let v = a[(0, 0)].re;
        if v < 0.0 || (power < 0.0 && v == 0.0) {
            return Err(Error::NotPositiveDefinite { spectrum: vec![v] });
        }
        return Ok(scalar(1, v.powf(power)));
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);
    let mut lam = Vec::with_capacity(m);
    for &v in eig.eigenvalues.iter() {
        if v < -tol || (power < 0.0 && v <= tol) {
            let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            spectrum.sort_by(|x, y| x.total_cmp(y));
            return Err(Error::NotPositiveDefinite { spectrum });
        }
        lam.push(C64::new(v.max(0.0).powf(power), 0.0));
    }
    let u = &eig.eigenvectors;
    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(lam));
    Ok(u * d * u.adjoint())
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite { spectrum: hermitian_spectrum(a) })
}
