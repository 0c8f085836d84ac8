//! Free Dirac Green's kernels in position space.
//!
//! B(r) = Q(r) + (2 pi)^{-3/2} z^2 (Q * J)(r) + z J(r), with
//! J1 = sqrt(pi/2) e^{-m r}/r, J = sqrt(pi/2) e^{i kappa r}/r and
//! Q = (m beta - i alpha.grad) J1.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dirac_algebra::{alpha_matrices, beta_matrix, MassCharge};
use crate::error::{Result, RlsError};
use crate::linalg::{c, Matrix4, Spinor, Vec3, I};
use crate::quadrature::{gauss_legendre, integrate, phi1, LATTICE_ZETA_1, LATTICE_ZETA_2};

pub mod lattice;
pub mod oracle;
pub mod resolvent;
pub mod table;

pub use lattice::{KernelConvolver, KernelTerm, LatticeKernel};
pub use oracle::{b_kernel_fft_oracle, j1_fft_oracle, q_kernel_fft_oracle, KernelField, OracleRegularization};
pub use table::OffGridKernel;
pub use resolvent::{apply_free_resolvent, apply_free_resolvent_on, apply_kernel_on, apply_l0_minus, free_resolvent_roundtrip, smooth_step, ResolventRoute, RoundTrip};

pub type Position3 = Vec3;

pub const SQRT_PI_2: f64 = 1.253_314_137_315_500_3;

/// (2 pi)^{-3/2}, the constant in front of every position-space convolution.
pub fn inv_two_pi_32() -> f64 {
    (2.0 * PI).powf(-1.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Spectral parameter of the resolvent: energy `z` and the wavenumber `kappa`
/// of the radial kernel e^{i kappa r}/r (Im kappa >= 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralParam {
    pub z: Complex64,
    pub kappa: Complex64,
}

impl SpectralParam {
    /// Boundary value at real lambda, |lambda| > m, approached from Im z = +-0.
    pub fn real(lambda: f64, branch: Branch, mc: &MassCharge) -> Result<Self> {
        let m1 = m1_real(lambda, mc)?;
        let s = branch.sign() * lambda.signum();
        Ok(Self { z: c(lambda), kappa: c(s * m1) })
    }

    pub fn complex(mu: Complex64, mc: &MassCharge) -> Result<Self> {
        if mu.im <= 0.0 {
            return Err(RlsError::Branch(mu));
        }
        Ok(Self { z: mu, kappa: m1_complex(mu, mc)? })
    }
}

/// m1 = sqrt(lambda^2 - m^2) > 0
pub fn m1_real(lambda: f64, mc: &MassCharge) -> Result<f64> {
    if !(lambda.abs() > mc.m) || !lambda.is_finite() {
        return Err(RlsError::Threshold { lambda, m: mc.m });
    }
    Ok((lambda * lambda - mc.m * mc.m).sqrt())
}

/// Root of mu^2 - m^2 with positive imaginary part.
pub fn m1_complex(mu: Complex64, mc: &MassCharge) -> Result<Complex64> {
    let w = (mu * mu - c(mc.m * mc.m)).sqrt();
    let w = if w.im < 0.0 { -w } else { w };
    if w.im <= 0.0 {
        return Err(RlsError::Branch(mu));
    }
    Ok(w)
}

fn radius(r: &Position3) -> Result<f64> {
    let n = r.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(RlsError::Singular);
    }
    Ok(n)
}

pub fn j1(r: &Position3, mc: &MassCharge) -> Result<f64> {
    let rr = radius(r)?;
    Ok(SQRT_PI_2 * (-mc.m * rr).exp() / rr)
}

/// Real closed form -sqrt(pi/2) e^{-m|r|} (r_k/|r|^2)(m + 1/|r|) for axis `k` in 0..3.
pub fn j2(r: &Position3, k: usize, mc: &MassCharge) -> Result<f64> {
    let rr = radius(r)?;
    if k > 2 {
        return Err(RlsError::Degenerate(format!("axis index {k} out of range")));
    }
    Ok(-SQRT_PI_2 * (-mc.m * rr).exp() * r[k] / (rr * rr) * (mc.m + 1.0 / rr))
}

/// sqrt(pi/2) e^{i kappa r}/r
#[inline]
pub fn j_kappa(rr: f64, kappa: Complex64) -> Complex64 {
    (I * kappa * rr).exp() * (SQRT_PI_2 / rr)
}

pub fn j_pm(r: &Position3, lambda: f64, branch: Branch, mc: &MassCharge) -> Result<Complex64> {
    let sp = SpectralParam::real(lambda, branch, mc)?;
    Ok(j_kappa(radius(r)?, sp.kappa))
}

pub fn j_plus_complex(r: &Position3, mu: Complex64, mc: &MassCharge) -> Result<Complex64> {
    let sp = SpectralParam::complex(mu, mc)?;
    Ok(j_kappa(radius(r)?, sp.kappa))
}

/// Coefficients of a matrix in span{I, beta, alpha_1, alpha_2, alpha_3}; every
/// free kernel lives in this span.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiracCoeffs {
    pub id: Complex64,
    pub beta: Complex64,
    pub alpha: [Complex64; 3],
}

impl DiracCoeffs {
    pub fn to_matrix(&self) -> Matrix4 {
        let a = alpha_matrices();
        Matrix4::identity() * self.id + beta_matrix() * self.beta + a[0] * self.alpha[0] + a[1] * self.alpha[1] + a[2] * self.alpha[2]
    }

    /// Projection by traces; exact for matrices inside the span.
    pub fn from_matrix(m: &Matrix4) -> Self {
        let a = alpha_matrices();
        let tr = |g: &Matrix4| (g * m).trace() / 4.0;
        Self { id: m.trace() / 4.0, beta: tr(&beta_matrix()), alpha: [tr(&a[0]), tr(&a[1]), tr(&a[2])] }
    }

    #[inline]
    pub fn apply(&self, v: &Spinor) -> Spinor {
        let [a1, a2, a3] = self.alpha;
        let s00 = a3;
        let s01 = a1 - I * a2;
        let s10 = a1 + I * a2;
        let s11 = -a3;
        Spinor::new(
            self.id * v[0] + self.beta * v[0] + s00 * v[2] + s01 * v[3],
            self.id * v[1] + self.beta * v[1] + s10 * v[2] + s11 * v[3],
            self.id * v[2] - self.beta * v[2] + s00 * v[0] + s01 * v[1],
            self.id * v[3] - self.beta * v[3] + s10 * v[0] + s11 * v[1],
        )
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { id: self.id * s, beta: self.beta * s, alpha: self.alpha.map(|a| a * s) }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            id: self.id + o.id,
            beta: self.beta + o.beta,
            alpha: [self.alpha[0] + o.alpha[0], self.alpha[1] + o.alpha[1], self.alpha[2] + o.alpha[2]],
        }
    }

    pub fn max_abs(&self) -> f64 {
        [self.id, self.beta, self.alpha[0], self.alpha[1], self.alpha[2]].iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn get(&self, t: usize) -> Complex64 {
        match t {
            0 => self.id,
            1 => self.beta,
            k => self.alpha[k - 2],
        }
    }

    pub fn get_mut(&mut self, t: usize) -> &mut Complex64 {
        match t {
            0 => &mut self.id,
            1 => &mut self.beta,
            k => &mut self.alpha[k - 2],
        }
    }
}

/// Q as coefficients: beta part m J1, alpha part i (m + 1/r) J1 r_k/r.
pub fn q_coeffs(r: &Position3, mc: &MassCharge) -> Result<DiracCoeffs> {
    let rr = radius(r)?;
    let j = SQRT_PI_2 * (-mc.m * rr).exp() / rr;
    let a = I * (j * (mc.m + 1.0 / rr) / rr);
    Ok(DiracCoeffs { id: c(0.0), beta: c(mc.m * j), alpha: [a * r.x, a * r.y, a * r.z] })
}

/// Position-space kernel of H0(q)^{-1}.
pub fn q_kernel(r: &Position3, mc: &MassCharge) -> Result<Matrix4> {
    Ok(q_coeffs(r, mc)?.to_matrix())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularCorrection {
    /// Corrected trapezoidal weights from the cubic-lattice zeta function.
    Zeta,
    /// Analytic average of the singular factor over a ball of the cell volume.
    BallAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvRoute {
    /// One-dimensional reduction of the radial convolution J1 * J, adaptive Gauss-Kronrod.
    Radial,
    /// Gauss product rule in spherical coordinates about the evaluation point.
    Tensor,
    /// Zero-padded FFT convolution of corrected lattice samples.
    FftLattice,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Linear size of the integration region (lattice side, or twice the truncation radius).
    pub extent: f64,
    /// Lattice points per axis, or Gauss points per panel for the tensor route.
    pub points: usize,
    pub correction: SingularCorrection,
    pub route: ConvRoute,
    /// Relative tolerance of the adaptive radial route.
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { extent: 24.0, points: 48, correction: SingularCorrection::Zeta, route: ConvRoute::Radial, tol: 1e-11 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 8 {
            return Err(RlsError::Grid(format!("quadrature needs at least 8 points, got {}", self.points)));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(RlsError::Grid(format!("quadrature extent must be positive, got {}", self.extent)));
        }
        if !(self.tol > 0.0) {
            return Err(RlsError::Grid("quadrature tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.points as f64
    }

    pub fn with_route(mut self, route: ConvRoute) -> Self {
        self.route = route;
        self
    }
}

/// S(rho) = (J1 * J)(rho) and dS/drho for radial J1 and J = sqrt(pi/2) e^{i kappa r}/r.
///
/// Bipolar coordinates reduce the 3D convolution of two radial functions to
/// S(rho) = (2 pi / rho) \int_0^inf u J1(u) \int_{|rho-u|}^{rho+u} v J(v) dv du.
pub fn radial_conv(rho: f64, kappa: Complex64, mc: &MassCharge, tol: f64) -> Result<(Complex64, Complex64)> {
    let m = mc.m;
    let c2 = PI / 2.0;
    let ik = I * kappa;
    let tail = rho + 48.0 / m;
    let budget = 4000;
    if rho < 1e-12 {
        let s = integrate(|u| (ik * u - m * u).exp() * (4.0 * PI * c2), 0.0, 48.0 / m, 0.0, tol, budget)?;
        return Ok((s, c(0.0)));
    }
    let inner = |u: f64| {
        let lo = (rho - u).abs();
        let len = 2.0 * rho.min(u);
        (ik * lo - m * u).exp() * phi1(ik * len) * (len * c2)
    };
    let dinner = |u: f64| {
        let sg = if u < rho { 1.0 } else { -1.0 };
        ((ik * (rho + u)).exp() - (ik * (rho - u).abs()).exp() * sg) * ((-m * u).exp() * c2)
    };
    let s = integrate(inner, 0.0, rho, 0.0, tol, budget)? + integrate(inner, rho, tail, 0.0, tol, budget)?;
    let d = integrate(dinner, 0.0, rho, 0.0, tol, budget)? + integrate(dinner, rho, tail, 0.0, tol, budget)?;
    let s = s * (2.0 * PI / rho);
    let ds = -s / rho + d * (2.0 * PI / rho);
    Ok((s, ds))
}

/// (Q * J)(r) from the radial pair (S, S'): m beta S - i (alpha.r/|r|) S'.
pub fn qj_from_radial(r: &Position3, s: Complex64, ds: Complex64, m: f64) -> DiracCoeffs {
    let rr = r.norm();
    let alpha = if rr == 0.0 { [c(0.0); 3] } else { [-I * ds * (r.x / rr), -I * ds * (r.y / rr), -I * ds * (r.z / rr)] };
    DiracCoeffs { id: c(0.0), beta: s * m, alpha }
}

fn conv_tensor(r: &Position3, kappa: Complex64, quad: &QuadratureSpec, mc: &MassCharge) -> Result<DiracCoeffs> {
    let rho = radius(r)?;
    let m = mc.m;
    let e3 = r / rho;
    let trial = if e3.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (trial - e3 * trial.dot(&e3)).normalize();
    let e2 = e3.cross(&e1);
    let n = quad.points;
    let (gx, gw) = gauss_legendre(n);
    let nphi = 8usize;
    let wmax = rho + 0.5 * quad.extent;
    let mut edges = vec![0.0, rho];
    let npan = ((wmax - rho) / 2.0).ceil().max(1.0) as usize;
    for p in 1..=npan {
        edges.push(rho + (wmax - rho) * p as f64 / npan as f64);
    }
    let c2 = PI / 2.0;
    let mut acc = DiracCoeffs::default();
    for pan in edges.windows(2) {
        let (a, b) = (pan[0], pan[1]);
        for (xi, wi) in gx.iter().zip(&gw) {
            let w = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            let ww = 0.5 * (b - a) * wi;
            let (tlo, thi) = ((rho - w).abs(), rho + w);
            let radial = (-m * w).exp() * (c2 / rho);
            for (xj, wj) in gx.iter().zip(&gw) {
                let t = 0.5 * (tlo + thi) + 0.5 * (thi - tlo) * xj;
                let wt = 0.5 * (thi - tlo) * wj;
                let cos_t = ((rho * rho + w * w - t * t) / (2.0 * rho * w)).clamp(-1.0, 1.0);
                let sin_t = (1.0 - cos_t * cos_t).sqrt();
                let phase = (I * kappa * t).exp() * (radial * ww * wt);
                for p in 0..nphi {
                    let phi = 2.0 * PI * p as f64 / nphi as f64;
                    let dir = e1 * (sin_t * phi.cos()) + e2 * (sin_t * phi.sin()) + e3 * cos_t;
                    let f = phase * (2.0 * PI / nphi as f64);
                    acc.beta += f * m;
                    let a = I * f * (m + 1.0 / w);
                    for k in 0..3 {
                        acc.alpha[k] += a * dir[k];
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// Numeric (Q * J)(r) for the given spectral parameter.
pub fn conv_qj_param(r: &Position3, sp: &SpectralParam, quad: &QuadratureSpec, mc: &MassCharge) -> Result<DiracCoeffs> {
    quad.validate()?;
    match quad.route {
        ConvRoute::Radial => {
            let (s, ds) = radial_conv(r.norm(), sp.kappa, mc, quad.tol)?;
            Ok(qj_from_radial(r, s, ds, mc.m))
        }
        ConvRoute::Tensor => conv_tensor(r, sp.kappa, quad, mc),
        ConvRoute::FftLattice => lattice::conv_qj_lattice_point(r, sp, quad, mc),
    }
}

pub fn conv_qj(r: &Position3, lambda: f64, branch: Branch, quad: &QuadratureSpec, mc: &MassCharge) -> Result<Matrix4> {
    let sp = SpectralParam::real(lambda, branch, mc)?;
    Ok(conv_qj_param(r, &sp, quad, mc)?.to_matrix())
}

/// The three pieces Q, (2 pi)^{-3/2} z^2 Q*J and z J of the kernel at r != 0.
pub fn b_terms(r: &Position3, sp: &SpectralParam, quad: &QuadratureSpec, mc: &MassCharge) -> Result<[DiracCoeffs; 3]> {
    let rr = radius(r)?;
    let q = q_coeffs(r, mc)?;
    let k = conv_qj_param(r, sp, quad, mc)?.scale(sp.z * sp.z * inv_two_pi_32());
    let j = DiracCoeffs { id: sp.z * j_kappa(rr, sp.kappa), ..Default::default() };
    Ok([q, k, j])
}

pub fn b_coeffs(r: &Position3, sp: &SpectralParam, quad: &QuadratureSpec, mc: &MassCharge) -> Result<DiracCoeffs> {
    let [q, k, j] = b_terms(r, sp, quad, mc)?;
    Ok(q.add(&k).add(&j))
}

pub fn b_kernel(r: &Position3, lambda: f64, branch: Branch, quad: &QuadratureSpec, mc: &MassCharge) -> Result<Matrix4> {
    let sp = SpectralParam::real(lambda, branch, mc)?;
    Ok(b_coeffs(r, &sp, quad, mc)?.to_matrix())
}

pub fn b_kernel_complex(r: &Position3, mu: Complex64, quad: &QuadratureSpec, mc: &MassCharge) -> Result<Matrix4> {
    let sp = SpectralParam::complex(mu, mc)?;
    Ok(b_coeffs(r, &sp, quad, mc)?.to_matrix())
}

/// Correction weights for the cell at the singular point and its neighbours.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CellWeights {
    /// Replacement value of 1/r on the singular cell.
    pub inv_r: f64,
    /// Weight of the +-h e_k stencil that corrects odd x_k/r^3 singularities.
    pub odd_stencil: f64,
    /// Extra value of the lattice product sum (1/r * 1/r) at coincident singularities.
    pub coincident: f64,
}

impl CellWeights {
    pub fn new(h: f64, mode: SingularCorrection) -> Self {
        match mode {
            SingularCorrection::Zeta => Self {
                inv_r: -LATTICE_ZETA_1 / h,
                odd_stencil: -LATTICE_ZETA_1 / (6.0 * h * h),
                coincident: (-LATTICE_ZETA_2 - LATTICE_ZETA_1 * LATTICE_ZETA_1) * h,
            },
            SingularCorrection::BallAverage => {
                let a = h * (3.0 / (4.0 * PI)).powf(1.0 / 3.0);
                Self { inv_r: 1.5 / a, odd_stencil: 0.0, coincident: 0.0 }
            }
        }
    }
}
