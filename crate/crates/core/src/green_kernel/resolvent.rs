//! The free resolvent (L0 - mu)^{-1} applied to spinor fields.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{inv_two_pi_32, KernelConvolver, LatticeKernel, QuadratureSpec, SpectralParam};
use crate::dirac_algebra::{h0, MassCharge};
use crate::error::{Result, RlsError};
use crate::fourier::{refine_field, Spectral3};
use crate::grid::{GridSpec, SpinorField};
use crate::linalg::{c, Matrix4, Spinor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ResolventRoute {
    /// Division by H0(q) - mu on the dual lattice (periodic).
    Spectral,
    /// Lattice convolution with (2 pi)^{-3/2} B(., mu) after trigonometric refinement of f.
    Convolution { refine: usize },
}

fn check_mu(mu: Complex64) -> Result<()> {
    if !(mu.im > 0.0) || !mu.re.is_finite() {
        return Err(RlsError::Branch(mu));
    }
    Ok(())
}

/// (H0(q) - mu)^{-1} = (H0(q) + mu) / (E^2 - mu^2).
fn resolvent_symbol(q: &crate::linalg::Vec3, mu: Complex64, mc: &MassCharge) -> Matrix4 {
    let e2 = mc.m * mc.m + q.norm_squared();
    (h0(q, mc) + Matrix4::identity() * mu) / (c(e2) - mu * mu)
}

pub fn apply_free_resolvent(f: &SpinorField, mu: Complex64, mc: &MassCharge, route: ResolventRoute) -> Result<SpinorField> {
    check_mu(mu)?;
    match route {
        ResolventRoute::Spectral => Ok(Spectral3::new(f.grid).apply_symbol(f, |q| resolvent_symbol(q, mu, mc))),
        ResolventRoute::Convolution { refine } => apply_free_resolvent_on(f, &f.grid, mu, mc, refine, &QuadratureSpec::default()),
    }
}

/// (L0 - mu) applied spectrally.
pub fn apply_l0_minus(f: &SpinorField, mu: Complex64, mc: &MassCharge) -> SpinorField {
    Spectral3::new(f.grid).apply_symbol(f, |q| h0(q, mc) - Matrix4::identity() * mu)
}

fn integer_ratio(x: f64, what: &str) -> Result<i64> {
    let r = x.round();
    if (x - r).abs() > 1e-6 {
        return Err(RlsError::Grid(format!("{what} must be an integer multiple of the source spacing")));
    }
    Ok(r as i64)
}

/// Convolution (2 pi)^{-3/2} int B(r - s, mu) f(s) ds evaluated at the points of `out`.
/// The source is trigonometrically refined by `refine` first; `out` must lie on the
/// refined lattice.
pub fn apply_free_resolvent_on(f: &SpinorField, out: &GridSpec, mu: Complex64, mc: &MassCharge, refine: usize, quad: &QuadratureSpec) -> Result<SpinorField> {
    check_mu(mu)?;
    apply_kernel_on(f, out, SpectralParam::complex(mu, mc)?, mc, refine, quad)
}

/// Convolution (2 pi)^{-3/2} int B(r - s) f(s) ds for any spectral parameter,
/// including the boundary values at real lambda.
pub fn apply_kernel_on(f: &SpinorField, out: &GridSpec, sp: SpectralParam, mc: &MassCharge, refine: usize, quad: &QuadratureSpec) -> Result<SpinorField> {
    if refine == 0 {
        return Err(RlsError::Grid("refinement factor must be at least 1".into()));
    }
    let fine = refine_field(f, refine);
    let hf = fine.grid.h;
    let nf = fine.grid.n as i64;
    let stride = integer_ratio(out.h / hf, "output spacing")?;
    if stride < 1 {
        return Err(RlsError::Grid("output spacing finer than the refined source".into()));
    }
    let mut start = [0i64; 3];
    for (a, s) in start.iter_mut().enumerate() {
        *s = integer_ratio((out.origin[a] - fine.grid.origin[a]) / hf, "output origin offset")?;
    }
    if start.iter().any(|&s| s != start[0]) {
        return Err(RlsError::Grid("output block must have equal offsets on all axes".into()));
    }
    let start = start[0];
    let len = (out.n as i64 - 1) * stride + 1;
    let kn = (start + len - 1).abs().max((start - (nf - 1)).abs()).max(start.abs()) as usize;
    let kernel = LatticeKernel::new(hf, kn, sp, quad, mc)?;
    let kc = KernelConvolver::new(&kernel, fine.grid.n, c(inv_two_pi_32() * hf.powi(3)));
    let block = kc.apply(&fine.components(), start, len as usize);
    drop(kc);
    let lu = len as usize;
    let s = stride as usize;
    let data: Vec<Spinor> = (0..out.len())
        .map(|idx| {
            let [i, j, k] = out.unravel(idx);
            let b = ((i * s) * lu + j * s) * lu + k * s;
            Spinor::new(block[0][b], block[1][b], block[2][b], block[3][b])
        })
        .collect();
    SpinorField::from_vec(*out, data)
}

/// C-infinity step: 1 for t <= 0, 0 for t >= 1.
pub fn smooth_step(t: f64) -> f64 {
    let psi = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        psi(1.0 - t) / (psi(1.0 - t) + psi(t))
    }
}

/// Result of the resolvent round trip f -> (L0 - mu) R(mu) f.
#[derive(Clone, Debug, Serialize)]
pub struct RoundTrip {
    pub relative_error: f64,
    pub refine: usize,
    pub padded_n: usize,
}

/// Applies the convolution resolvent onto a grid `pad` times larger, cuts it off
/// smoothly outside the source box, applies (L0 - mu) spectrally there and compares
/// with f on the source box.
pub fn free_resolvent_roundtrip(f: &SpinorField, mu: Complex64, mc: &MassCharge, refine: usize, pad: usize, quad: &QuadratureSpec) -> Result<RoundTrip> {
    if pad < 2 {
        return Err(RlsError::Grid("round trip needs a padded grid (pad >= 2)".into()));
    }
    let g = f.grid;
    let n = g.n;
    let np = n * pad;
    let shift = ((pad - 1) * n / 2) as f64 * g.h;
    let out = GridSpec::new(np, g.h, [g.origin[0] - shift, g.origin[1] - shift, g.origin[2] - shift])?;
    let u = apply_free_resolvent_on(f, &out, mu, mc, refine, quad)?;
    let center: Vec<f64> = (0..3).map(|a| g.origin[a] + (n / 2) as f64 * g.h).collect();
    let inner = (n / 2) as f64 * g.h;
    let outer = 0.92 * (np / 2) as f64 * g.h;
    let win = |x: f64| smooth_step(((x.abs() - inner) / (outer - inner)).max(0.0));
    let mut u = u;
    for (idx, v) in u.data.iter_mut().enumerate() {
        let p = out.point(idx);
        *v *= c(win(p.x - center[0]) * win(p.y - center[1]) * win(p.z - center[2]));
    }
    let back = apply_l0_minus(&u, mu, mc);
    let off = (np - n) / 2;
    let mut num = 0.0;
    let mut den = 0.0;
    for idx in 0..g.len() {
        let [i, j, k] = g.unravel(idx);
        let d = back.data[out.index(i + off, j + off, k + off)] - f.data[idx];
        num += d.norm_squared();
        den += f.data[idx].norm_squared();
    }
    if den == 0.0 {
        return Ok(RoundTrip { relative_error: if num == 0.0 { 0.0 } else { f64::INFINITY }, refine, padded_n: np });
    }
    Ok(RoundTrip { relative_error: (num / den).sqrt(), refine, padded_n: np })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::I;

    fn mc1() -> MassCharge {
        MassCharge::new(1.0, 1.0).unwrap()
    }

    fn tester(n: usize, h: f64, sigma: f64) -> SpinorField {
        let g = GridSpec::centered(n, h).unwrap();
        let s = Spinor::new(c(1.0), I * 0.5, c(-0.3), Complex64::new(0.2, 0.1));
        SpinorField::from_fn(g, |r| s * c((-r.norm_squared() / (2.0 * sigma * sigma)).exp() * (1.0 + 0.3 * r.x)))
    }

    #[test]
    fn spectral_route_inverts_l0_minus() {
        let f = tester(16, 0.5, 1.0);
        let mu = Complex64::new(1.5, 0.2);
        let g = apply_free_resolvent(&f, mu, &mc1(), ResolventRoute::Spectral).unwrap();
        let back = apply_l0_minus(&g, mu, &mc1());
        assert!(back.sub(&f).norm() < 1e-12 * f.norm());
    }

    #[test]
    fn zero_source_gives_zero() {
        let f = SpinorField::zeros(GridSpec::centered(8, 0.5).unwrap());
        let g = apply_free_resolvent(&f, Complex64::new(1.5, 0.2), &mc1(), ResolventRoute::Convolution { refine: 1 }).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn rejects_real_mu() {
        let f = SpinorField::zeros(GridSpec::centered(8, 0.5).unwrap());
        assert!(apply_free_resolvent(&f, c(1.5), &mc1(), ResolventRoute::Spectral).is_err());
    }

    #[test]
    fn convolution_route_round_trip_small() {
        let f = tester(16, 0.5, 1.0);
        let rt = free_resolvent_roundtrip(&f, Complex64::new(1.5, 0.2), &mc1(), 1, 2, &QuadratureSpec::default()).unwrap();
        assert!(rt.relative_error < 3e-2, "{}", rt.relative_error);
    }

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(-1.0), 1.0);
        assert_eq!(smooth_step(1.5), 0.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }
}
