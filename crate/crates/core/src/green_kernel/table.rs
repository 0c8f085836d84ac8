//! Kernel evaluation at arbitrary separations, for sampling fields off the solve lattice.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{b_coeffs, inv_two_pi_32, j_kappa, q_coeffs, qj_from_radial, radial_conv, ConvRoute, DiracCoeffs, QuadratureSpec, SpectralParam};
use crate::dirac_algebra::MassCharge;
use crate::error::Result;
use crate::linalg::{c, Vec3};

/// B(r) for |r| in a band [rho_min, rho_max]. On the radial route the pair (S, S')
/// is tabulated once on a uniform radius grid and interpolated (S'' follows
/// from the radial equation satisfied by S); outside the band, or
/// on the other routes, every call integrates afresh.
pub struct OffGridKernel {
    sp: SpectralParam,
    mc: MassCharge,
    quad: QuadratureSpec,
    rho0: f64,
    drho: f64,
    s: Vec<Complex64>,
    ds: Vec<Complex64>,
}

impl OffGridKernel {
    pub fn new(rho_min: f64, rho_max: f64, sp: SpectralParam, quad: &QuadratureSpec, mc: &MassCharge) -> Result<Self> {
        quad.validate()?;
        let mut out = Self { sp, mc: *mc, quad: *quad, rho0: 0.0, drho: 1.0, s: Vec::new(), ds: Vec::new() };
        if quad.route != ConvRoute::Radial || !(rho_max > rho_min) {
            return Ok(out);
        }
        let drho = 0.02 / sp.kappa.norm().max(mc.m).max(1.0);
        let rho0 = (rho_min - drho).max(0.25);
        let count = ((rho_max + drho - rho0) / drho).ceil() as usize + 1;
        let pairs: Vec<(Complex64, Complex64)> =
            (0..count).into_par_iter().map(|j| radial_conv(rho0 + j as f64 * drho, sp.kappa, mc, quad.tol)).collect::<Result<_>>()?;
        out.rho0 = rho0;
        out.drho = drho;
        out.s = pairs.iter().map(|p| p.0).collect();
        out.ds = pairs.iter().map(|p| p.1).collect();
        Ok(out)
    }

    /// S'' from the radial form of (-Laplacian - kappa^2) S = 4 pi sqrt(pi/2) J1.
    fn second_derivative(&self, j: usize) -> Complex64 {
        let rho = self.rho0 + j as f64 * self.drho;
        let k2 = self.sp.kappa * self.sp.kappa;
        -self.ds[j] * (2.0 / rho) - self.s[j] * k2 - c(2.0 * PI * PI * (-self.mc.m * rho).exp() / rho)
    }

    /// Cubic Hermite interpolation of S and S' with exact slopes.
    fn interpolate(&self, rho: f64) -> Option<(Complex64, Complex64)> {
        if self.s.len() < 2 {
            return None;
        }
        let x = (rho - self.rho0) / self.drho;
        let j = x.floor() as i64;
        if j < 0 || j as usize + 1 >= self.s.len() {
            return None;
        }
        let j = j as usize;
        let t = x - j as f64;
        let d = self.drho;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let s = self.s[j] * h00 + self.ds[j] * (h10 * d) + self.s[j + 1] * h01 + self.ds[j + 1] * (h11 * d);
        let ds = self.ds[j] * h00 + self.second_derivative(j) * (h10 * d) + self.ds[j + 1] * h01 + self.second_derivative(j + 1) * (h11 * d);
        Some((s, ds))
    }

    pub fn coeffs(&self, r: &Vec3) -> Result<DiracCoeffs> {
        let rho = r.norm();
        match self.interpolate(rho) {
            Some((s, ds)) => {
                let q = q_coeffs(r, &self.mc)?;
                let k = qj_from_radial(r, s, ds, self.mc.m).scale(self.sp.z * self.sp.z * inv_two_pi_32());
                let j = DiracCoeffs { id: self.sp.z * j_kappa(rho, self.sp.kappa), ..Default::default() };
                Ok(q.add(&k).add(&j))
            }
            None => b_coeffs(r, &self.sp, &self.quad, &self.mc),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green_kernel::tests::b_exact;
    use crate::green_kernel::Branch;

    #[test]
    fn interpolated_kernel_matches_closed_form() {
        let mc = MassCharge::new(1.0, 1.0).unwrap();
        let sp = SpectralParam::real(1.5, Branch::Plus, &mc).unwrap();
        let t = OffGridKernel::new(18.0, 22.0, sp, &QuadratureSpec::default(), &mc).unwrap();
        for r in [Vec3::new(19.3, 0.4, -1.1), Vec3::new(-3.0, 20.0, 2.5), Vec3::new(0.0, 0.0, 21.77)] {
            let got = t.coeffs(&r).unwrap();
            let want = b_exact(&r, &sp, mc.m);
            let err = got.add(&want.scale(Complex64::new(-1.0, 0.0))).max_abs();
            assert!(err < 1e-7 * want.max_abs(), "{err:e}");
        }
        let inside = Vec3::new(1.0, 0.5, 0.0);
        let err = t.coeffs(&inside).unwrap().add(&b_exact(&inside, &sp, mc.m).scale(Complex64::new(-1.0, 0.0))).max_abs();
        assert!(err < 1e-7, "{err:e}");
    }
}
