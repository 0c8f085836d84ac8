//! Free Dirac operator in momentum space.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RlsError};
use crate::linalg::{c, Matrix4, Spinor, Vec3, I};

pub type Momentum3 = Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassCharge {
    pub m: f64,
    pub e_charge: f64,
}

impl MassCharge {
    pub fn new(m: f64, e_charge: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(RlsError::Degenerate(format!("mass must be positive and finite, got {m}")));
        }
        if !e_charge.is_finite() {
            return Err(RlsError::Degenerate("charge must be finite".into()));
        }
        Ok(Self { m, e_charge })
    }

    /// Massless variant, only meaningful for the algebraic routines.
    pub fn massless(e_charge: f64) -> Self {
        Self { m: 0.0, e_charge }
    }

    /// sqrt(m^2 + |q|^2)
    pub fn energy(&self, q: &Momentum3) -> f64 {
        (self.m * self.m + q.norm_squared()).sqrt()
    }
}

fn pauli() -> [[[Complex64; 2]; 2]; 3] {
    let o = c(0.0);
    let l = c(1.0);
    [[[o, l], [l, o]], [[o, -I], [I, o]], [[l, o], [o, -l]]]
}

/// alpha_k = [[0, sigma_k], [sigma_k, 0]].
pub fn alpha_matrices() -> [Matrix4; 3] {
    let s = pauli();
    let mut out = [Matrix4::zeros(); 3];
    for (k, a) in out.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                a[(i, j + 2)] = s[k][i][j];
                a[(i + 2, j)] = s[k][i][j];
            }
        }
    }
    out
}

pub fn beta_matrix() -> Matrix4 {
    Matrix4::from_diagonal(&Spinor::new(c(1.0), c(1.0), c(-1.0), c(-1.0)))
}

/// v . alpha for a complex 3-vector.
pub fn alpha_dot(v: [Complex64; 3]) -> Matrix4 {
    let a = alpha_matrices();
    a[0] * v[0] + a[1] * v[1] + a[2] * v[2]
}

pub fn alpha_dot_real(v: &Vec3) -> Matrix4 {
    alpha_dot([c(v.x), c(v.y), c(v.z)])
}

/// H0(q) = m beta + q . alpha
pub fn h0(q: &Momentum3, mc: &MassCharge) -> Matrix4 {
    beta_matrix() * c(mc.m) + alpha_dot_real(q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    pub lambda: [f64; 4],
    pub g: [Spinor; 4],
    pub normalized: bool,
}

impl SpectralData {
    pub fn energy(&self) -> f64 {
        self.lambda[3]
    }
}

/// Below this fraction of m the eigenvectors of m beta are used directly.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

/// Eigenvalues and eigenvectors of H0(q). Channels 1, 2 carry -E and 3, 4 carry +E.
pub fn eigen_h0(q: &Momentum3, mc: &MassCharge, normalize: bool) -> SpectralData {
    let e = mc.energy(q);
    let qn = q.norm();
    let g = if qn < DEGENERACY_THRESHOLD * mc.m || (mc.m == 0.0 && qn == 0.0) {
        let unit = |k: usize| Spinor::from_fn(|i, _| c(if i == k { 1.0 } else { 0.0 }));
        [unit(3), unit(2), unit(0), unit(1)]
    } else {
        let plus = mc.m + e;
        // m - E written without cancellation
        let minus = -q.norm_squared() / (mc.m + e);
        let a = Complex64::new(-q.x, q.y);
        let b = Complex64::new(-q.x, -q.y);
        let q3 = c(q.z);
        [
            Spinor::new(a / plus, q3 / plus, c(0.0), c(1.0)),
            Spinor::new(-q3 / plus, b / plus, c(1.0), c(0.0)),
            Spinor::new(a / minus, q3 / minus, c(0.0), c(1.0)),
            Spinor::new(-q3 / minus, b / minus, c(1.0), c(0.0)),
        ]
    };
    let g = if normalize { g.map(|v| v / c(v.norm())) } else { g };
    SpectralData { lambda: [-e, -e, e, e], g, normalized: normalize }
}

/// H0(q)^{-1} = H0(q) / (m^2 + |q|^2)
pub fn h0_inverse(q: &Momentum3, mc: &MassCharge) -> Result<Matrix4> {
    let e2 = mc.m * mc.m + q.norm_squared();
    if e2 == 0.0 {
        return Err(RlsError::Degenerate("H0(q) is singular at m = 0, q = 0".into()));
    }
    Ok(h0(q, mc) / c(e2))
}

/// (H0(q) - z)^{-1} assembled from H0^{-1} and the scalar pole factor 1/(E^2 - z^2).
pub fn momentum_resolvent(q: &Momentum3, z: Complex64, mc: &MassCharge) -> Result<Matrix4> {
    let e2 = mc.m * mc.m + q.norm_squared();
    let denom = c(e2) - z * z;
    if denom.norm() <= 1e-14 * e2.max(z.norm_sqr()) {
        return Err(RlsError::Pole(z));
    }
    if e2 == 0.0 {
        return Ok(Matrix4::identity() * (-z.inv()));
    }
    let hinv = h0_inverse(q, mc)?;
    let f = denom.inv();
    Ok(hinv + hinv * (z * z * f) + Matrix4::identity() * (z * f))
}
