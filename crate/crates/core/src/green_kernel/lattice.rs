//! Kernels sampled on cubic lattices with singular-cell corrections, and their
//! FFT convolution with spinor fields.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    inv_two_pi_32, j_kappa, qj_from_radial, radial_conv, CellWeights, ConvRoute, DiracCoeffs, QuadratureSpec, SpectralParam,
    SQRT_PI_2,
};
use crate::dirac_algebra::MassCharge;
use crate::error::{Result, RlsError};
use crate::fourier::Convolver;
use crate::linalg::{c, Spinor, Vec3, I};

/// The three pieces of the kernel: Q, the convolution term and z J.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelTerm {
    Q,
    QConvJ,
    J,
}

pub const ALL_TERMS: [KernelTerm; 3] = [KernelTerm::Q, KernelTerm::QConvJ, KernelTerm::J];

/// The kernel B on the lattice h Z^3, offsets up to `kn` per axis.
pub struct LatticeKernel {
    pub h: f64,
    pub kn: usize,
    pub sp: SpectralParam,
    pub m: f64,
    terms: Vec<KernelTerm>,
    weights: CellWeights,
    /// (S, S') by squared integer radius for the radial route.
    radial: Vec<Option<(Complex64, Complex64)>>,
    /// Full Q*J table for the FFT lattice route.
    qj_table: Option<Vec<DiracCoeffs>>,
}

impl LatticeKernel {
    pub fn new(h: f64, kn: usize, sp: SpectralParam, quad: &QuadratureSpec, mc: &MassCharge) -> Result<Self> {
        Self::with_terms(h, kn, sp, quad, mc, &ALL_TERMS)
    }

    pub fn with_terms(h: f64, kn: usize, sp: SpectralParam, quad: &QuadratureSpec, mc: &MassCharge, terms: &[KernelTerm]) -> Result<Self> {
        quad.validate()?;
        let weights = CellWeights::new(h, quad.correction);
        let need_conv = terms.contains(&KernelTerm::QConvJ);
        let mut radial = Vec::new();
        let mut qj_table = None;
        if need_conv {
            match quad.route {
                ConvRoute::FftLattice => {
                    let nq = ((0.5 * quad.extent) / h).round().max(1.0) as usize;
                    qj_table = Some(conv_qj_lattice(h, nq, kn, &sp, quad, mc)?);
                }
                _ => radial = radial_table(h, kn, sp.kappa, mc, quad.tol)?,
            }
        }
        Ok(Self { h, kn, sp, m: mc.m, terms: terms.to_vec(), weights, radial, qj_table })
    }

    pub fn width(&self) -> usize {
        2 * self.kn + 1
    }

    fn term(&self, t: KernelTerm, d: [i64; 3]) -> DiracCoeffs {
        let h = self.h;
        let m = self.m;
        let r = Vec3::new(d[0] as f64 * h, d[1] as f64 * h, d[2] as f64 * h);
        let rr = r.norm();
        let n1 = d.iter().map(|x| x.abs()).sum::<i64>();
        match t {
            KernelTerm::Q => {
                if n1 == 0 {
                    return DiracCoeffs { beta: c(SQRT_PI_2 * m * (self.weights.inv_r - m)), ..Default::default() };
                }
                let j = SQRT_PI_2 * (-m * rr).exp() / rr;
                let a = I * (j * (m + 1.0 / rr) / rr);
                let mut out = DiracCoeffs { id: c(0.0), beta: c(m * j), alpha: [a * r.x, a * r.y, a * r.z] };
                if n1 == 1 {
                    // odd leading term i sqrt(pi/2) x_k/r^3 of Q
                    let k = d.iter().position(|&x| x != 0).expect("unit offset");
                    out.alpha[k] += I * (SQRT_PI_2 * self.weights.odd_stencil * d[k] as f64);
                }
                out
            }
            KernelTerm::QConvJ => {
                let pref = self.sp.z * self.sp.z * inv_two_pi_32();
                let raw = match &self.qj_table {
                    Some(tab) => {
                        let w = self.width() as i64;
                        let kn = self.kn as i64;
                        tab[(((d[0] + kn) * w + d[1] + kn) * w + d[2] + kn) as usize]
                    }
                    None => {
                        let n2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as usize;
                        let (s, ds) = self.radial[n2].expect("radial table covers every lattice radius");
                        qj_from_radial(&r, s, ds, m)
                    }
                };
                raw.scale(pref)
            }
            KernelTerm::J => {
                let v = if n1 == 0 {
                    c(SQRT_PI_2 * self.weights.inv_r) + I * self.sp.kappa * SQRT_PI_2
                } else {
                    j_kappa(rr, self.sp.kappa)
                };
                DiracCoeffs { id: self.sp.z * v, ..Default::default() }
            }
        }
    }

    /// Corrected kernel value at integer offset `d`, summed over the selected terms.
    pub fn coeffs(&self, d: [i64; 3]) -> DiracCoeffs {
        self.terms.iter().fold(DiracCoeffs::default(), |acc, &t| acc.add(&self.term(t, d)))
    }

    pub fn coeffs_term(&self, t: KernelTerm, d: [i64; 3]) -> DiracCoeffs {
        self.term(t, d)
    }

    /// Dense table over all offsets, row-major with offset -kn first.
    pub fn table(&self) -> Vec<DiracCoeffs> {
        let w = self.width() as i64;
        let kn = self.kn as i64;
        (0..w * w * w)
            .into_par_iter()
            .map(|idx| {
                let d = [idx / (w * w) - kn, (idx / w) % w - kn, idx % w - kn];
                self.coeffs(d)
            })
            .collect()
    }
}

fn radial_table(h: f64, kn: usize, kappa: Complex64, mc: &MassCharge, tol: f64) -> Result<Vec<Option<(Complex64, Complex64)>>> {
    let mut set = BTreeSet::new();
    for i in 0..=kn {
        for j in 0..=i {
            for k in 0..=j {
                set.insert(i * i + j * j + k * k);
            }
        }
    }
    let keys: Vec<usize> = set.into_iter().collect();
    let vals: Vec<Result<(Complex64, Complex64)>> = keys.par_iter().map(|&n2| radial_conv((n2 as f64).sqrt() * h, kappa, mc, tol)).collect();
    let mut out = vec![None; 3 * kn * kn + 1];
    for (k, v) in keys.into_iter().zip(vals) {
        out[k] = Some(v?);
    }
    Ok(out)
}

/// Q*J on offsets |d| <= n_out (per axis) by FFT convolution of corrected lattice
/// samples of Q (truncated to the cube of half-width nq) and J.
pub fn conv_qj_lattice(h: f64, nq: usize, n_out: usize, sp: &SpectralParam, quad: &QuadratureSpec, mc: &MassCharge) -> Result<Vec<DiracCoeffs>> {
    let m = mc.m;
    let w = CellWeights::new(h, quad.correction);
    let nj = nq + n_out;
    let jw = 2 * nj + 1;
    let jtab: Vec<Complex64> = (0..jw * jw * jw)
        .into_par_iter()
        .map(|idx| {
            let d = [(idx / (jw * jw)) as i64 - nj as i64, ((idx / jw) % jw) as i64 - nj as i64, (idx % jw) as i64 - nj as i64];
            let rr = h * ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
            if rr == 0.0 {
                c(SQRT_PI_2 * w.inv_r) + I * sp.kappa * SQRT_PI_2
            } else {
                j_kappa(rr, sp.kappa)
            }
        })
        .collect();
    // kernel offsets must span output minus source: n_out + nj
    let conv = Convolver::new(n_out + nj, jw);
    let src = conv.source_transform(&jtab);
    drop(jtab);
    let qbuf = |which: usize| -> Vec<Complex64> {
        let mut buf = conv.buffer();
        let nqi = nq as i64;
        for i in -nqi..=nqi {
            for j in -nqi..=nqi {
                for k in -nqi..=nqi {
                    let d = [i, j, k];
                    let n1 = i.abs() + j.abs() + k.abs();
                    let r = Vec3::new(i as f64 * h, j as f64 * h, k as f64 * h);
                    let rr = r.norm();
                    let v = if which == 0 {
                        if n1 == 0 {
                            c(SQRT_PI_2 * m * (w.inv_r - m))
                        } else {
                            c(SQRT_PI_2 * m * (-m * rr).exp() / rr)
                        }
                    } else {
                        let ax = which - 1;
                        let mut v = if n1 == 0 { c(0.0) } else { I * (SQRT_PI_2 * (-m * rr).exp() * (m + 1.0 / rr) * r[ax] / (rr * rr)) };
                        if n1 == 1 && d[ax] != 0 {
                            v += I * (SQRT_PI_2 * w.odd_stencil * d[ax] as f64);
                        }
                        v
                    };
                    buf[conv.kernel_slot(d)] = v;
                }
            }
        }
        conv.fft().forward(&mut buf);
        buf
    };
    let h3 = h * h * h;
    let mut parts: Vec<Vec<Complex64>> = Vec::with_capacity(4);
    for which in 0..4 {
        let kt = qbuf(which);
        let prod: Vec<Complex64> = kt.iter().zip(&src).map(|(a, b)| a * b * h3).collect();
        // source index 0 sits at offset -nj
        parts.push(conv.extract(prod, nj as i64 - n_out as i64, 2 * n_out + 1));
    }
    let ow = 2 * n_out + 1;
    let center = (n_out * ow + n_out) * ow + n_out;
    let mut out: Vec<DiracCoeffs> = (0..ow * ow * ow)
        .map(|i| DiracCoeffs { id: c(0.0), beta: parts[0][i], alpha: [parts[1][i], parts[2][i], parts[3][i]] })
        .collect();
    // both factors singular at the same cell
    out[center].beta += c(m * (PI / 2.0) * w.coincident);
    Ok(out)
}

/// FFT-lattice route of conv_qj at a single lattice point r.
pub fn conv_qj_lattice_point(r: &Vec3, sp: &SpectralParam, quad: &QuadratureSpec, mc: &MassCharge) -> Result<DiracCoeffs> {
    let h = quad.spacing();
    let mut d = [0i64; 3];
    for a in 0..3 {
        let t = r[a] / h;
        if (t - t.round()).abs() > 1e-9 {
            return Err(RlsError::Grid(format!("point {r:?} is not on the quadrature lattice of spacing {h}")));
        }
        d[a] = t.round() as i64;
    }
    let n_out = d.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
    let nq = ((0.5 * quad.extent) / h).round().max(1.0) as usize;
    let tab = conv_qj_lattice(h, nq, n_out, sp, quad, mc)?;
    let ow = (2 * n_out + 1) as i64;
    let no = n_out as i64;
    Ok(tab[(((d[0] + no) * ow + d[1] + no) * ow + d[2] + no) as usize])
}

/// Convolution of a lattice kernel with 4-component sources:
/// out(t) = scale * sum_s B(t - s) f(s).
pub struct KernelConvolver {
    conv: Convolver,
    spectra: [Vec<Complex64>; 5],
    src_n: usize,
}

impl KernelConvolver {
    pub fn new(kernel: &LatticeKernel, src_n: usize, scale: Complex64) -> Self {
        let conv = Convolver::new(kernel.kn, src_n);
        let kn = kernel.kn as i64;
        let s = conv.size();
        let mut spectra: [Vec<Complex64>; 5] = std::array::from_fn(|_| conv.buffer());
        let [b0, b1, b2, b3, b4] = &mut spectra;
        // slot x holds offset x - kn; slots beyond 2kn stay zero
        (b0.par_iter_mut(), b1.par_iter_mut(), b2.par_iter_mut(), b3.par_iter_mut(), b4.par_iter_mut())
            .into_par_iter()
            .enumerate()
            .for_each(|(idx, (v0, v1, v2, v3, v4))| {
                let x = [idx / (s * s), (idx / s) % s, idx % s];
                if x.iter().any(|&xi| xi as i64 > 2 * kn) {
                    return;
                }
                let k = kernel.coeffs(x.map(|xi| xi as i64 - kn)).scale(scale);
                *v0 = k.id;
                *v1 = k.beta;
                *v2 = k.alpha[0];
                *v3 = k.alpha[1];
                *v4 = k.alpha[2];
            });
        for b in spectra.iter_mut() {
            conv.fft().forward(b);
        }
        Self { conv, spectra, src_n }
    }

    pub fn src_n(&self) -> usize {
        self.src_n
    }

    /// Output block of `out_n`^3 points starting at source offset `start`.
    pub fn apply(&self, src: &[Vec<Complex64>; 4], start: i64, out_n: usize) -> [Vec<Complex64>; 4] {
        let mut f: Vec<Vec<Complex64>> = src.iter().map(|s| self.conv.source_transform(s)).collect();
        let n = f[0].len();
        let (f0, rest) = f.split_at_mut(1);
        let (f1, rest) = rest.split_at_mut(1);
        let (f2, f3) = rest.split_at_mut(1);
        let (f0, f1, f2, f3) = (&mut f0[0], &mut f1[0], &mut f2[0], &mut f3[0]);
        let sp = &self.spectra;
        f0.par_iter_mut()
            .zip(f1.par_iter_mut())
            .zip(f2.par_iter_mut().zip(f3.par_iter_mut()))
            .enumerate()
            .for_each(|(i, ((a, b), (cc, d)))| {
                let k = DiracCoeffs { id: sp[0][i], beta: sp[1][i], alpha: [sp[2][i], sp[3][i], sp[4][i]] };
                let v = k.apply(&Spinor::new(*a, *b, *cc, *d));
                *a = v[0];
                *b = v[1];
                *cc = v[2];
                *d = v[3];
            });
        debug_assert_eq!(n, self.conv.size().pow(3));
        let mut it = f.into_iter().map(|s| self.conv.extract(s, start, out_n));
        std::array::from_fn(|_| it.next().expect("four components"))
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::b_exact;
    use super::*;
    use crate::green_kernel::{Branch, SingularCorrection};

    fn mc1() -> MassCharge {
        MassCharge::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn table_matches_pointwise_kernel_off_the_singular_stencil() {
        let sp = SpectralParam::real(1.5, Branch::Plus, &mc1()).unwrap();
        let lk = LatticeKernel::new(0.5, 4, sp, &QuadratureSpec::default(), &mc1()).unwrap();
        for d in [[2i64, 1, 0], [-3, 4, 1], [0, 0, -2]] {
            let r = Vec3::new(d[0] as f64, d[1] as f64, d[2] as f64) * 0.5;
            let want = b_exact(&r, &sp, 1.0);
            let got = lk.coeffs(d);
            assert!(got.add(&want.scale(c(-1.0))).max_abs() < 1e-8 * want.max_abs());
        }
    }

    #[test]
    fn terms_sum_to_full_kernel() {
        let sp = SpectralParam::real(1.5, Branch::Plus, &mc1()).unwrap();
        let quad = QuadratureSpec::default();
        let full = LatticeKernel::new(0.5, 3, sp, &quad, &mc1()).unwrap();
        let parts: Vec<LatticeKernel> = ALL_TERMS.iter().map(|&t| LatticeKernel::with_terms(0.5, 3, sp, &quad, &mc1(), &[t]).unwrap()).collect();
        for d in [[0i64, 0, 0], [1, 0, 0], [2, -1, 3]] {
            let s = parts.iter().fold(DiracCoeffs::default(), |acc, p| acc.add(&p.coeffs(d)));
            assert!(s.add(&full.coeffs(d).scale(c(-1.0))).max_abs() < 1e-14);
        }
    }

    #[test]
    fn fft_lattice_route_matches_radial_away_from_origin() {
        let sp = SpectralParam::real(1.5, Branch::Plus, &mc1()).unwrap();
        let quad = QuadratureSpec { extent: 24.0, points: 96, ..Default::default() };
        let h = quad.spacing();
        let tab = conv_qj_lattice(h, 48, 12, &sp, &quad, &mc1()).unwrap();
        let ow = 25usize;
        for j in [4usize, 8, 12] {
            let got = tab[(12 * ow + 12) * ow + 12 + j];
            let r = Vec3::new(0.0, 0.0, j as f64 * h);
            let (s, ds) = radial_conv(r.norm(), sp.kappa, &mc1(), 1e-12).unwrap();
            let want = qj_from_radial(&r, s, ds, 1.0);
            let err = got.add(&want.scale(c(-1.0))).max_abs() / want.max_abs();
            assert!(err < 5e-3, "j={j} err={err}");
        }
    }

    #[test]
    fn ball_average_is_available() {
        let sp = SpectralParam::real(1.5, Branch::Plus, &mc1()).unwrap();
        let quad = QuadratureSpec { correction: SingularCorrection::BallAverage, ..Default::default() };
        let lk = LatticeKernel::new(0.5, 2, sp, &quad, &mc1()).unwrap();
        let z = LatticeKernel::new(0.5, 2, sp, &QuadratureSpec::default(), &mc1()).unwrap();
        assert!(lk.coeffs([0, 0, 0]).beta != z.coeffs([0, 0, 0]).beta);
        assert_eq!(lk.coeffs([2, 1, 0]), z.coeffs([2, 1, 0]));
    }
}
