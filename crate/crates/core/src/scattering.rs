//! Scattering amplitudes from solved fields, the first Born oracle and the
//! far-field check of the outgoing spherical wave.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirac_algebra::{h0, MassCharge};
use crate::error::{Result, RlsError};
use crate::green_kernel::{m1_real, QuadratureSpec};
use crate::grid::{GridSpec, SpinorField};
use crate::linalg::{c, Matrix4, Spinor, Vec3};
use crate::potential::{PotentialSpec, Profile};
use crate::quadrature::gauss_legendre;
use crate::rls_solver::{recover_phi_at, ScatterChannel};

/// Unit vectors on the sphere with surface quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub dirs: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl DirectionSet {
    /// The 20 vertices of the regular dodecahedron, a spherical 5-design with equal weights.
    pub fn dodecahedron() -> Self {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let ip = 1.0 / p;
        let mut dirs = Vec::with_capacity(20);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    dirs.push(Vec3::new(sx, sy, sz));
                }
            }
        }
        for s1 in [-1.0, 1.0] {
            for s2 in [-1.0, 1.0] {
                dirs.push(Vec3::new(0.0, s1 * ip, s2 * p));
                dirs.push(Vec3::new(s1 * ip, s2 * p, 0.0));
                dirs.push(Vec3::new(s1 * p, 0.0, s2 * ip));
            }
        }
        let dirs: Vec<Vec3> = dirs.into_iter().map(|d| d.normalize()).collect();
        let w = 4.0 * PI / dirs.len() as f64;
        Self { weights: vec![w; dirs.len()], dirs }
    }

    /// Gauss-Legendre in cos(theta) times the uniform rule in phi.
    pub fn lat_long(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(RlsError::Scattering("lat-long set needs at least one node per angle".into()));
        }
        let (x, w) = gauss_legendre(n_theta);
        let mut dirs = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (ct, wt) in x.iter().zip(&w) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for j in 0..n_phi {
                let ph = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                dirs.push(Vec3::new(st * ph.cos(), st * ph.sin(), *ct));
                weights.push(wt * 2.0 * PI / n_phi as f64);
            }
        }
        Ok(Self { dirs, weights })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// `FarField` is the coefficient of e^{i m1 R}/R in phi - phi0, -(1/4 pi)(lambda + H0(m1 omega)) I(omega);
/// `Literal` is -(lambda/4 pi) I(omega), with I(omega) = int e^{-i m1 s.omega} V(s) phi(s) ds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeForm {
    FarField,
    Literal,
}

fn prefactor(form: AmplitudeForm, lambda: f64, m1: f64, omega: &Vec3, mc: &MassCharge) -> Matrix4 {
    match form {
        AmplitudeForm::Literal => Matrix4::identity() * c(-lambda / (4.0 * PI)),
        AmplitudeForm::FarField => (h0(&(omega * m1), mc) + Matrix4::identity() * c(lambda)) * c(-1.0 / (4.0 * PI)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionAmplitude {
    pub omega: [f64; 3],
    pub f_re: [f64; 4],
    pub f_im: [f64; 4],
    /// ||f(omega)||^2, the squared spinor norm.
    pub strength: f64,
}

impl DirectionAmplitude {
    fn new(omega: &Vec3, f: &Spinor) -> Self {
        Self {
            omega: [omega.x, omega.y, omega.z],
            f_re: std::array::from_fn(|a| f[a].re),
            f_im: std::array::from_fn(|a| f[a].im),
            strength: f.norm_squared(),
        }
    }

    pub fn f(&self) -> Spinor {
        Spinor::from_fn(|a, _| Complex64::new(self.f_re[a], self.f_im[a]))
    }

    pub fn omega(&self) -> Vec3 {
        Vec3::from(self.omega)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringResult {
    pub channel: ScatterChannel,
    pub lambda: f64,
    pub k: [f64; 3],
    pub form: AmplitudeForm,
    pub directions: Vec<DirectionAmplitude>,
    pub grid: Option<GridSpec>,
}

impl ScatteringResult {
    pub fn amplitudes(&self) -> Vec<Spinor> {
        self.directions.iter().map(|d| d.f()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| RlsError::Scattering(e.to_string()))
    }

    /// Columns theta, phi, strength.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,phi,strength")?;
        for d in &self.directions {
            let o = d.omega();
            writeln!(w, "{:.17e},{:.17e},{:.17e}", o.z.clamp(-1.0, 1.0).acos(), o.y.atan2(o.x), d.strength)?;
        }
        Ok(())
    }
}

/// Scattering amplitude from a field phi on its grid.
pub fn amplitude(phi: &SpinorField, ch: &ScatterChannel, spec: &PotentialSpec, mc: &MassCharge, dirs: &DirectionSet, form: AmplitudeForm) -> Result<ScatteringResult> {
    let m1 = m1_real(ch.lambda, mc)?;
    let g = phi.grid;
    let h3 = g.cell_volume();
    let vphi: Vec<(Vec3, Spinor)> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let p = g.point(i);
            (p, spec.coeffs(&p).apply(&phi.data[i]))
        })
        .collect();
    let directions = dirs
        .dirs
        .par_iter()
        .map(|w| {
            let integral = vphi.iter().fold(Spinor::zeros(), |acc, (s, v)| acc + v * Complex64::from_polar(h3, -m1 * s.dot(w)));
            DirectionAmplitude::new(w, &(prefactor(form, ch.lambda, m1, w, mc) * integral))
        })
        .collect();
    Ok(ScatteringResult { channel: *ch, lambda: ch.lambda, k: [ch.k.x, ch.k.y, ch.k.z], form, directions, grid: Some(g) })
}

fn gaussian_scalar(spec: &PotentialSpec) -> Result<(f64, f64)> {
    let vector_free = spec.vector.iter().all(|p| matches!(p, Profile::Zero));
    match spec.scalar {
        Profile::Gaussian { g, a } if vector_free && spec.table.is_none() => Ok((g, a)),
        _ => Err(RlsError::Scattering("the Born oracle needs a scalar gaussian potential without vector part".into())),
    }
}

/// First Born amplitude of the scalar gaussian nu = g e^{-a r^2}, in closed form:
/// I(omega) = (-e) g (pi/a)^{3/2} e^{-|k - m1 omega|^2/(4a)} g_n(k).
pub fn born_amplitude_oracle(spec: &PotentialSpec, ch: &ScatterChannel, mc: &MassCharge, omega: &Vec3, form: AmplitudeForm) -> Result<Spinor> {
    let (g, a) = gaussian_scalar(spec)?;
    let m1 = m1_real(ch.lambda, mc)?;
    let q2 = (ch.k - omega * m1).norm_squared();
    let integral = ch.polarization(mc) * c(-spec.charge * g * (PI / a).powf(1.5) * (-q2 / (4.0 * a)).exp());
    Ok(prefactor(form, ch.lambda, m1, omega, mc) * integral)
}

pub fn born_result(spec: &PotentialSpec, ch: &ScatterChannel, mc: &MassCharge, dirs: &DirectionSet, form: AmplitudeForm) -> Result<ScatteringResult> {
    let directions = dirs
        .dirs
        .iter()
        .map(|w| Ok(DirectionAmplitude::new(w, &born_amplitude_oracle(spec, ch, mc, w, form)?)))
        .collect::<Result<_>>()?;
    Ok(ScatteringResult { channel: *ch, lambda: ch.lambda, k: [ch.k.x, ch.k.y, ch.k.z], form, directions, grid: None })
}

/// Polynomial (Neville) extrapolation of samples (x_i, y_i) to x = 0.
pub fn extrapolate_to_zero(samples: &[(f64, Spinor)]) -> Result<Spinor> {
    if samples.is_empty() {
        return Err(RlsError::Scattering("extrapolation needs at least one sample".into()));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mut p: Vec<Spinor> = samples.iter().map(|s| s.1).collect();
    for level in 1..p.len() {
        for i in 0..p.len() - level {
            let (xi, xj) = (x[i], x[i + level]);
            if xi == xj {
                return Err(RlsError::Scattering("extrapolation nodes must be distinct".into()));
            }
            p[i] = (p[i + 1] * c(xi) - p[i] * c(xj)) / c(xi - xj);
        }
    }
    Ok(p[0])
}

#[derive(Clone, Debug, Serialize)]
pub struct FarFieldReport {
    pub radii: Vec<f64>,
    /// max over directions of ||phi(R w) - phi0 - e^{i m1 R}/R f(w)|| R
    pub epsilon: Vec<f64>,
    /// the same quantity per direction (outer index) and radius (inner index)
    pub epsilon_per_direction: Vec<Vec<f64>>,
    pub monotone: bool,
    /// max over directions of ||f_fit - f|| / max ||f||, with f_fit the two-point
    /// fit of f + b/R from the two largest radii
    pub fit_relative_error: f64,
}

/// Samples phi on spheres of the given radii about the grid center and measures the
/// remainder of the outgoing-wave form. `f` must be in the far-field form.
pub fn far_field_check(psi: &SpinorField, ch: &ScatterChannel, spec: &PotentialSpec, mc: &MassCharge, quad: &QuadratureSpec, f: &ScatteringResult, radii: &[f64]) -> Result<FarFieldReport> {
    if f.form != AmplitudeForm::FarField {
        return Err(RlsError::Scattering("far-field check needs the far-field amplitude form".into()));
    }
    let box_radius = 0.5 * 3f64.sqrt() * psi.grid.extent();
    if radii.iter().any(|&r| !(r > box_radius)) {
        return Err(RlsError::Scattering(format!("radii must exceed the solve-box radius {box_radius}")));
    }
    let m1 = m1_real(ch.lambda, mc)?;
    let g = ch.polarization(mc);
    let center = psi.grid.center();
    let nd = f.directions.len();
    // scattered part times R e^{-i m1 R}, per direction and radius
    let mut u = vec![vec![Spinor::zeros(); radii.len()]; nd];
    let mut eps = vec![vec![0.0; radii.len()]; nd];
    for (j, &r) in radii.iter().enumerate() {
        let pts: Vec<Vec3> = f.directions.iter().map(|d| center + d.omega() * r).collect();
        let phi = recover_phi_at(psi, ch, spec, mc, quad, &pts)?;
        for (i, d) in f.directions.iter().enumerate() {
            let scat = phi[i] - g * Complex64::from_polar(1.0, ch.k.dot(&pts[i]));
            let rem = scat - d.f() * (Complex64::from_polar(1.0, m1 * r) / r);
            eps[i][j] = rem.norm() * r;
            u[i][j] = scat * Complex64::from_polar(r, -m1 * r);
        }
    }
    let epsilon: Vec<f64> = (0..radii.len()).map(|j| eps.iter().map(|e| e[j]).fold(0.0, f64::max)).collect();
    let monotone = epsilon.windows(2).all(|w| w[1] < w[0]);
    let fmax = f.directions.iter().map(|d| d.f().norm()).fold(0.0, f64::max);
    let fit_relative_error = if radii.len() >= 2 && fmax > 0.0 {
        let (a, b) = (radii.len() - 2, radii.len() - 1);
        let (r1, r2) = (radii[a], radii[b]);
        f.directions
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let fit = (u[i][b] * c(r2) - u[i][a] * c(r1)) / c(r2 - r1);
                (fit - d.f()).norm() / fmax
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(FarFieldReport { radii: radii.to_vec(), epsilon, epsilon_per_direction: eps, monotone, fit_relative_error })
}
