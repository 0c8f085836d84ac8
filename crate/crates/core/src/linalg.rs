//! Small dense helpers for 4x4 complex matrices.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::error::{Result, RlsError};

pub type Matrix4 = nalgebra::Matrix4<Complex64>;
pub type Spinor = nalgebra::Vector4<Complex64>;
pub type Vec3 = nalgebra::Vector3<f64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest singular value.
pub fn op_norm(m: &Matrix4) -> f64 {
    m.singular_values().max()
}

pub fn frobenius(m: &Matrix4) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &Matrix4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_deviation(m: &Matrix4) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn is_finite(m: &Matrix4) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending order.
///
/// Each eigenvector is phase-fixed so that its first non-negligible component is
/// real and positive, which makes the unitary reproducible.
pub fn hermitian_eigen(m: &Matrix4) -> Result<([f64; 4], Matrix4)> {
    let dev = hermitian_deviation(m);
    let scale = max_abs(m).max(1.0);
    if dev > 1e-12 * scale {
        return Err(RlsError::NotHermitian(dev));
    }
    let herm = (m + m.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(herm);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vals = [0.0; 4];
    let mut u = Matrix4::zeros();
    for (k, &j) in order.iter().enumerate() {
        vals[k] = eig.eigenvalues[j];
        let mut v = eig.eigenvectors.column(j).into_owned();
        let vmax = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if let Some(lead) = v.iter().find(|z| z.norm() > 1e-8 * vmax).copied() {
            let phase = lead.conj() / lead.norm();
            v *= phase;
        }
        u.set_column(k, &v);
    }
    Ok((vals, u))
}

/// exp(-i t M) for Hermitian M.
pub fn expm_hermitian(m: &Matrix4, t: f64) -> Result<Matrix4> {
    let (vals, u) = hermitian_eigen(m)?;
    let d = Matrix4::from_diagonal(&Spinor::from_fn(|k, _| Complex64::from_polar(1.0, -t * vals[k])));
    Ok(u * d * u.adjoint())
}

/// Generic inverse by Gaussian elimination with partial pivoting; used where an
/// independent route to the closed-form inverses is wanted.
pub fn gauss_inverse(m: &Matrix4) -> Option<Matrix4> {
    let mut a = *m;
    let mut inv = Matrix4::identity();
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm()))?;
        if a[(piv, col)].norm() == 0.0 {
            return None;
        }
        a.swap_rows(col, piv);
        inv.swap_rows(col, piv);
        let d = a[(col, col)];
        for j in 0..4 {
            a[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for i in 0..4 {
            if i != col {
                let f = a[(i, col)];
                if f != Complex64::new(0.0, 0.0) {
                    for j in 0..4 {
                        let aj = a[(col, j)];
                        let ij = inv[(col, j)];
                        a[(i, j)] -= f * aj;
                        inv[(i, j)] -= f * ij;
                    }
                }
            }
        }
    }
    Some(inv)
}
