//! FFT oracles: kernels obtained by inverse transforming their momentum-space symbols.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Branch, DiracCoeffs, SpectralParam};
use crate::dirac_algebra::{momentum_resolvent, MassCharge};
use crate::error::{Result, RlsError};
use crate::fourier::Spectral3;
use crate::grid::GridSpec;
use crate::linalg::{c, Matrix4, Vec3, I};

/// How the on-shell singularity of the resolvent symbol is regularized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OracleRegularization {
    /// Sample (H0(q) - lambda -+ i epsilon)^{-1} directly on the dual lattice of the grid.
    Damped { epsilon: f64 },
    /// Transform of the kernel truncated to a ball of radius `truncation` times the
    /// grid extent, with a Gaussian filter of width one internal spacing, evaluated
    /// on a grid refined by `refine` and padded by `pad` per axis.
    Truncated { refine: usize, pad: usize, truncation: f64 },
}

impl Default for OracleRegularization {
    fn default() -> Self {
        Self::Truncated { refine: 2, pad: 2, truncation: 0.6 }
    }
}

/// A Dirac-matrix valued kernel sampled on a grid.
#[derive(Clone, Debug)]
pub struct KernelField {
    pub grid: GridSpec,
    pub values: Vec<DiracCoeffs>,
    /// Radius within which the samples represent the untruncated kernel.
    pub valid_radius: f64,
}

impl KernelField {
    pub fn matrix(&self, idx: usize) -> Matrix4 {
        self.values[idx].to_matrix()
    }

    /// Rows of r1,r2,r3 followed by Re/Im of the 16 matrix entries in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut head = String::from("r1,r2,r3");
        for i in 0..4 {
            for j in 0..4 {
                head.push_str(&format!(",re_{i}{j},im_{i}{j}"));
            }
        }
        writeln!(w, "{head}")?;
        for (idx, v) in self.values.iter().enumerate() {
            let r = self.grid.point(idx);
            let m = v.to_matrix();
            let mut line = format!("{:.17e},{:.17e},{:.17e}", r.x, r.y, r.z);
            for i in 0..4 {
                for j in 0..4 {
                    line.push_str(&format!(",{:.17e},{:.17e}", m[(i, j)].re, m[(i, j)].im));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Inverse transform of the five Dirac components of a symbol on `grid`.
fn invert_symbol<S>(grid: GridSpec, symbol: S) -> Vec<DiracCoeffs>
where
    S: Fn(&Vec3) -> DiracCoeffs + Sync,
{
    let sp = Spectral3::new(grid);
    let mut out = vec![DiracCoeffs::default(); grid.len()];
    let mut buf = vec![c(0.0); grid.len()];
    for t in 0..5 {
        buf.par_iter_mut().enumerate().for_each(|(idx, v)| *v = symbol(&sp.momentum(idx)).get(t));
        sp.from_momentum(&mut buf);
        out.par_iter_mut().zip(buf.par_iter()).for_each(|(o, v)| *o.get_mut(t) = *v);
    }
    out
}

/// Transform of sqrt(pi/2) e^{i k r}/r restricted to r < R, which is
/// [1 - e^{ikR}(cos qR - i k sin(qR)/q)] / (q^2 - k^2).
fn truncated_green(q: f64, k: Complex64, rr: f64) -> Complex64 {
    let eik = (I * k * rr).exp();
    let num = |q: f64| -> Complex64 {
        let sinc = if q == 0.0 { c(rr) } else { c((q * rr).sin() / q) };
        1.0 - eik * ((q * rr).cos() - I * k * sinc)
    };
    let den = q * q - k * k;
    if den.norm() > 1e-8 * (k.norm_sqr() + q * q).max(1e-300) {
        return num(q) / den;
    }
    // removable singularity on the shell q = k
    let dnum = -eik * (-(rr) * (q * rr).sin() - I * k * (rr * (q * rr).cos() / q - (q * rr).sin() / (q * q)));
    dnum / (2.0 * q)
}

fn check_lambda(lambda: f64, mc: &MassCharge) -> Result<()> {
    if lambda.abs() <= mc.m {
        return Err(RlsError::Threshold { lambda, m: mc.m });
    }
    Ok(())
}

/// Samples of B(r, lambda) for the given branch obtained from the momentum-space
/// resolvent (H0(q) - lambda -+ i0)^{-1}.
pub fn b_kernel_fft_oracle(grid: &GridSpec, lambda: f64, reg: OracleRegularization, branch: Branch, mc: &MassCharge) -> Result<KernelField> {
    check_lambda(lambda, mc)?;
    let m = mc.m;
    match reg {
        OracleRegularization::Damped { epsilon } => {
            if epsilon <= 0.0 || !epsilon.is_finite() {
                return Err(RlsError::Grid(format!("oracle damping must be positive, got {epsilon}")));
            }
            let z = Complex64::new(lambda, branch.sign() * epsilon);
            let values = invert_symbol(*grid, |q| {
                let r = momentum_resolvent(q, z, mc).expect("damped symbol has no pole");
                DiracCoeffs::from_matrix(&r)
            });
            Ok(KernelField { grid: *grid, values, valid_radius: 0.5 * grid.extent() })
        }
        OracleRegularization::Truncated { refine, pad, truncation } => {
            if refine == 0 || pad == 0 || !(truncation > 0.0 && truncation < 0.5 * pad as f64) {
                return Err(RlsError::Grid("invalid truncated-oracle parameters".into()));
            }
            let sp = SpectralParam::real(lambda, branch, mc)?;
            let k = sp.kappa;
            let rr = truncation * grid.extent();
            let sigma = grid.h / refine as f64;
            let values = invert_refined(grid, refine, pad, |q| {
                let qq = q.norm();
                let g = truncated_green(qq, k, rr) * (-(qq * qq - k * k) * (sigma * sigma / 2.0)).exp();
                DiracCoeffs { id: sp.z * g, beta: c(m) * g, alpha: [g * q.x, g * q.y, g * q.z] }
            })?;
            Ok(KernelField { grid: *grid, values, valid_radius: rr - 4.0 * sigma })
        }
    }
}

/// Inverse transform of a symbol on the grid refined by `refine` and enlarged by
/// `pad` per axis (centered at the origin), sampled back at the points of `grid`.
fn invert_refined<S>(grid: &GridSpec, refine: usize, pad: usize, symbol: S) -> Result<Vec<DiracCoeffs>>
where
    S: Fn(&Vec3) -> DiracCoeffs + Sync,
{
    let hi = grid.h / refine as f64;
    let ni = grid.n * refine * pad;
    let inner = GridSpec::centered(ni, hi)?;
    let lattice: Vec<usize> = (0..grid.len())
        .map(|idx| {
            let p = grid.point(idx);
            let mut flat = 0usize;
            for a in 0..3 {
                let t = (p[a] - inner.origin[a]) / hi;
                let ti = t.round();
                if (t - ti).abs() > 1e-6 || ti < 0.0 || ti >= ni as f64 {
                    return Err(RlsError::Grid("grid points must lie on the lattice h/refine through the origin".into()));
                }
                flat = flat * ni + ti as usize;
            }
            Ok(flat)
        })
        .collect::<Result<_>>()?;
    let internal = invert_symbol(inner, symbol);
    Ok(lattice.into_iter().map(|i| internal[i]).collect())
}

/// Filter e^{-(|q|^2 + m^2) sigma^2 / 2}. Multiplying a symbol
/// (|q|^2 + m^2)^{-1} P(q) by it convolves the Yukawa factor with a Gaussian, which
/// leaves it unchanged up to erfc tails for |r| >> sigma.
fn yukawa_filter(q: &Vec3, m: f64, sigma: f64) -> f64 {
    (-(q.norm_squared() + m * m) * sigma * sigma / 2.0).exp()
}

/// Samples of J1 from the inverse transform of the filtered symbol 1/(m^2 + |q|^2),
/// evaluated on the grid refined four times.
pub fn j1_fft_oracle(grid: &GridSpec, mc: &MassCharge) -> Result<Vec<Complex64>> {
    let m = mc.m;
    let sigma = grid.h / 2.0;
    let v = invert_refined(grid, 4, 1, |q| DiracCoeffs { id: c(yukawa_filter(q, m, sigma) / (m * m + q.norm_squared())), ..Default::default() })?;
    Ok(v.into_iter().map(|v| v.id).collect())
}

/// Samples of Q from the inverse transform of the filtered symbol H0(q)^{-1},
/// evaluated on the grid refined four times.
pub fn q_kernel_fft_oracle(grid: &GridSpec, mc: &MassCharge) -> Result<KernelField> {
    let m = mc.m;
    let sigma = grid.h / 2.0;
    let values = invert_refined(grid, 4, 1, |q| {
        let d = yukawa_filter(q, m, sigma) / (m * m + q.norm_squared());
        DiracCoeffs { id: c(0.0), beta: c(m * d), alpha: [c(q.x * d), c(q.y * d), c(q.z * d)] }
    })?;
    Ok(KernelField { grid: *grid, values, valid_radius: 0.5 * grid.extent() })
}
