//! Discrete Fourier chokepoint.
//!
//! Continuous convention used throughout the crate:
//! forward  F u(q) = (2 pi)^{-3/2} \int e^{-i q.r} u(r) dr,
//! inverse  u(r)   = (2 pi)^{-3/2} \int e^{+i q.r} F u(q) dq,
//! so that -i grad corresponds to multiplication by q and H0(q) is the symbol of
//! m beta + alpha.p. Every grid transform in the crate goes through this file.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::{GridSpec, SpinorField};
use crate::linalg::{Matrix4, Spinor, Vec3};

/// Unnormalized 3D FFT over a row-major array with the last axis contiguous.
pub struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut p = FftPlanner::new();
        let fwd = dims.map(|n| p.plan_fft_forward(n));
        let inv = dims.map(|n| p.plan_fft_inverse(n));
        Self { dims, fwd, inv }
    }

    pub fn cubic(n: usize) -> Self {
        Self::new([n; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// sum_j e^{-2 pi i j.l / n} x_j
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// sum_l e^{+2 pi i j.l / n} x_l (no 1/N factor)
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [n0, n1, n2] = self.dims;
        assert_eq!(data.len(), n0 * n1 * n2, "array does not match FFT dimensions");
        let z = Complex64::new(0.0, 0.0);

        let p2 = &plans[2];
        data.par_chunks_mut(n1 * n2).for_each(|slab| {
            let mut scratch = vec![z; p2.get_inplace_scratch_len()];
            p2.process_with_scratch(slab, &mut scratch);
        });

        let p1 = &plans[1];
        data.par_chunks_mut(n1 * n2).for_each(|slab| {
            let mut buf = vec![z; n1 * n2];
            let mut scratch = vec![z; p1.get_inplace_scratch_len()];
            for j in 0..n1 {
                for k in 0..n2 {
                    buf[k * n1 + j] = slab[j * n2 + k];
                }
            }
            p1.process_with_scratch(&mut buf, &mut scratch);
            for j in 0..n1 {
                for k in 0..n2 {
                    slab[j * n2 + k] = buf[k * n1 + j];
                }
            }
        });

        let p0 = &plans[0];
        let mut buf = vec![z; n0 * n2];
        let mut scratch = vec![z; p0.get_inplace_scratch_len()];
        for j in 0..n1 {
            for i in 0..n0 {
                let row = (i * n1 + j) * n2;
                for k in 0..n2 {
                    buf[k * n0 + i] = data[row + k];
                }
            }
            p0.process_with_scratch(&mut buf, &mut scratch);
            for i in 0..n0 {
                let row = (i * n1 + j) * n2;
                for k in 0..n2 {
                    data[row + k] = buf[k * n0 + i];
                }
            }
        }
    }
}

/// Angular wavenumbers 2 pi l / (n h) in FFT order, negative frequencies last.
pub fn wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let nn = n as i64;
    (0..nn)
        .map(|i| {
            let k = if i < (nn + 1) / 2 { i } else { i - nn };
            2.0 * PI * k as f64 / (n as f64 * h)
        })
        .collect()
}

/// Transforms between samples on a [`GridSpec`] and samples of the continuous
/// transform on the dual momentum lattice.
pub struct Spectral3 {
    pub grid: GridSpec,
    fft: Fft3,
    k: Vec<f64>,
    phase: [Vec<Complex64>; 3],
}

impl Spectral3 {
    pub fn new(grid: GridSpec) -> Self {
        let k = wavenumbers(grid.n, grid.h);
        let phase = std::array::from_fn(|a| k.iter().map(|&q| Complex64::from_polar(1.0, -q * grid.origin[a])).collect());
        Self { grid, fft: Fft3::cubic(grid.n), k, phase }
    }

    pub fn momentum(&self, idx: usize) -> Vec3 {
        let [i, j, l] = self.grid.unravel(idx);
        Vec3::new(self.k[i], self.k[j], self.k[l])
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn dq(&self) -> f64 {
        2.0 * PI / self.grid.extent()
    }

    /// e^{-i q.origin} for the mode with flat index `idx`.
    fn origin_phase(&self, idx: usize) -> Complex64 {
        let [i, j, l] = self.grid.unravel(idx);
        self.phase[0][i] * self.phase[1][j] * self.phase[2][l]
    }

    /// Samples of u(r) -> samples of F u(q).
    pub fn to_momentum(&self, data: &mut [Complex64]) {
        self.fft.forward(data);
        let s = (2.0 * PI).powf(-1.5) * self.grid.cell_volume();
        data.par_iter_mut().enumerate().for_each(|(idx, v)| *v *= self.origin_phase(idx) * s);
    }

    /// Samples of F u(q) -> samples of u(r).
    pub fn from_momentum(&self, data: &mut [Complex64]) {
        data.par_iter_mut().enumerate().for_each(|(idx, v)| *v *= self.origin_phase(idx).conj());
        self.fft.inverse(data);
        let s = (2.0 * PI).powf(-1.5) * self.dq().powi(3);
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    pub fn field_to_momentum(&self, f: &SpinorField) -> [Vec<Complex64>; 4] {
        let mut comps = f.components();
        for c in comps.iter_mut() {
            self.to_momentum(c);
        }
        comps
    }

    pub fn field_from_momentum(&self, mut comps: [Vec<Complex64>; 4]) -> SpinorField {
        for c in comps.iter_mut() {
            self.from_momentum(c);
        }
        SpinorField::from_components(self.grid, &comps)
    }

    /// F^{-1}[ S(q) F u ] for a 4x4 matrix symbol S.
    pub fn apply_symbol<S>(&self, f: &SpinorField, symbol: S) -> SpinorField
    where
        S: Fn(&Vec3) -> Matrix4 + Sync,
    {
        let comps = self.field_to_momentum(f);
        let n = self.grid.len();
        let out: Vec<Spinor> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let v = Spinor::new(comps[0][idx], comps[1][idx], comps[2][idx], comps[3][idx]);
                symbol(&self.momentum(idx)) * v
            })
            .collect();
        let comps: [Vec<Complex64>; 4] = std::array::from_fn(|a| out.iter().map(|s| s[a]).collect());
        self.field_from_momentum(comps)
    }
}

/// Linear (non-periodic) convolution of a kernel table with a source block via
/// FFTs. The kernel is given on offsets -kn..=kn per axis and must cover every
/// offset between a requested output point and a source point; a circular
/// transform of size >= 2kn+1 is then free of wrap-around.
pub struct Convolver {
    fft: Fft3,
    size: usize,
    kn: usize,
    src_n: usize,
}

impl Convolver {
    pub fn new(kn: usize, src_n: usize) -> Self {
        let size = good_size((2 * kn + 1).max(src_n));
        Self { fft: Fft3::cubic(size), size, kn, src_n }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kn(&self) -> usize {
        self.kn
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    /// Zero buffer of the transform size.
    pub fn buffer(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.size * self.size * self.size]
    }

    /// Place a kernel value for offset `d` into a buffer prepared by [`Convolver::buffer`].
    #[inline]
    pub fn kernel_slot(&self, d: [i64; 3]) -> usize {
        let s = self.size as i64;
        let w = |x: i64| (x + self.kn as i64).rem_euclid(s) as usize;
        (w(d[0]) * self.size + w(d[1])) * self.size + w(d[2])
    }

    /// Transform of a kernel table laid out as (2kn+1)^3, offset (0,0,0) at the center.
    pub fn kernel_transform(&self, table: &[Complex64]) -> Vec<Complex64> {
        let kw = 2 * self.kn + 1;
        assert_eq!(table.len(), kw * kw * kw);
        let mut buf = self.buffer();
        let kn = self.kn as i64;
        for i in 0..kw {
            for j in 0..kw {
                for k in 0..kw {
                    let slot = self.kernel_slot([i as i64 - kn, j as i64 - kn, k as i64 - kn]);
                    buf[slot] = table[(i * kw + j) * kw + k];
                }
            }
        }
        self.fft.forward(&mut buf);
        buf
    }

    pub fn source_transform(&self, src: &[Complex64]) -> Vec<Complex64> {
        let n = self.src_n;
        assert_eq!(src.len(), n * n * n);
        let s = self.size;
        let mut buf = self.buffer();
        for i in 0..n {
            for j in 0..n {
                let a = (i * n + j) * n;
                let b = (i * s + j) * s;
                buf[b..b + n].copy_from_slice(&src[a..a + n]);
            }
        }
        self.fft.forward(&mut buf);
        buf
    }

    /// Inverse transform of a product spectrum, returning the output block whose
    /// point (0,0,0) sits at source offset `start` (per axis, may be negative)
    /// with `out_n` points per axis.
    pub fn extract(&self, mut spec: Vec<Complex64>, start: i64, out_n: usize) -> Vec<Complex64> {
        let kn = self.kn as i64;
        assert!(
            start - (self.src_n as i64 - 1) >= -kn && start + out_n as i64 - 1 <= kn,
            "kernel table does not cover the requested output block"
        );
        self.fft.inverse(&mut spec);
        let s = self.size as i64;
        let norm = 1.0 / (s * s * s) as f64;
        let w = |x: i64| (x + kn).rem_euclid(s) as usize;
        let su = self.size;
        let mut out = Vec::with_capacity(out_n * out_n * out_n);
        for i in 0..out_n as i64 {
            for j in 0..out_n as i64 {
                let row = (w(start + i) * su + w(start + j)) * su;
                for k in 0..out_n as i64 {
                    out.push(spec[row + w(start + k)] * norm);
                }
            }
        }
        out
    }
}

/// Trigonometric interpolation of a periodic-compatible field onto a grid with
/// spacing h/refine and the same origin. The Nyquist mode is dropped.
pub fn refine_field(f: &SpinorField, refine: usize) -> SpinorField {
    let g = f.grid;
    if refine == 1 {
        return f.clone();
    }
    let n = g.n;
    let nf = n * refine;
    let fine = GridSpec { n: nf, h: g.h / refine as f64, origin: g.origin };
    let coarse_fft = Fft3::cubic(n);
    let fine_fft = Fft3::cubic(nf);
    let slot = |i: usize| -> Option<usize> {
        let k = if i < n.div_ceil(2) { i as i64 } else { i as i64 - n as i64 };
        if n.is_multiple_of(2) && k == -(n as i64) / 2 {
            None
        } else {
            Some(k.rem_euclid(nf as i64) as usize)
        }
    };
    let norm = 1.0 / (n * n * n) as f64;
    let comps: [Vec<Complex64>; 4] = std::array::from_fn(|a| {
        let mut c: Vec<Complex64> = f.data.iter().map(|s| s[a]).collect();
        coarse_fft.forward(&mut c);
        let mut big = vec![Complex64::new(0.0, 0.0); nf * nf * nf];
        for i in 0..n {
            let Some(si) = slot(i) else { continue };
            for j in 0..n {
                let Some(sj) = slot(j) else { continue };
                for k in 0..n {
                    let Some(sk) = slot(k) else { continue };
                    big[(si * nf + sj) * nf + sk] = c[(i * n + j) * n + k] * norm;
                }
            }
        }
        fine_fft.inverse(&mut big);
        big
    });
    SpinorField::from_components(fine, &comps)
}

/// Smallest size >= n whose prime factors are 2, 3 and 5.
pub fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut t = m;
        for p in [2, 3, 5] {
            while t.is_multiple_of(p) {
                t /= p;
            }
        }
        if t == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn fft3_matches_direct_dft() {
        let dims = [3, 4, 5];
        let n: usize = dims.iter().product();
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut y = x.clone();
        Fft3::new(dims).forward(&mut y);
        for l in [0usize, 7, 31, 59] {
            let (l0, l1, l2) = (l / 20, (l / 5) % 4, l % 5);
            let mut s = c(0.0);
            for j in 0..n {
                let (j0, j1, j2) = (j / 20, (j / 5) % 4, j % 5);
                let ph = -2.0 * PI * ((j0 * l0) as f64 / 3.0 + (j1 * l1) as f64 / 4.0 + (j2 * l2) as f64 / 5.0);
                s += x[j] * Complex64::from_polar(1.0, ph);
            }
            assert!((s - y[l]).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_transform_is_gaussian() {
        // F e^{-r^2/2} = e^{-q^2/2} under the unitary convention
        let g = GridSpec::new(40, 0.4, [-8.0, -8.4, -7.6]).unwrap();
        let sp = Spectral3::new(g);
        let mut d: Vec<Complex64> = (0..g.len()).map(|i| c((-g.point(i).norm_squared() / 2.0).exp())).collect();
        sp.to_momentum(&mut d);
        for idx in [0, 1, 33, 1000, 5000] {
            let q = sp.momentum(idx);
            assert!((d[idx] - c((-q.norm_squared() / 2.0).exp())).norm() < 1e-10);
        }
        sp.from_momentum(&mut d);
        for idx in [0, 77, 10000] {
            assert!((d[idx] - c((-g.point(idx).norm_squared() / 2.0).exp())).norm() < 1e-12);
        }
    }

    #[test]
    fn sign_convention_derivative() {
        // symbol q_x acts as -i d/dx
        let g = GridSpec::centered(32, 0.4).unwrap();
        let sp = Spectral3::new(g);
        let f = SpinorField::from_fn(g, |r| Spinor::new(c((-r.norm_squared()).exp()), c(0.0), c(0.0), c(0.0)));
        let out = sp.apply_symbol(&f, |q| Matrix4::identity() * c(q.x));
        for idx in [100, 5000, 17000] {
            let r = g.point(idx);
            let want = Complex64::new(0.0, -1.0) * (-2.0 * r.x) * (-r.norm_squared()).exp();
            assert!((out.data[idx][0] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn convolver_matches_direct_sum() {
        let kn = 4;
        let kw = 2 * kn + 1;
        let table: Vec<Complex64> = (0..kw * kw * kw).map(|i| Complex64::new((i as f64 * 0.1).cos(), 0.2)).collect();
        let n = 4;
        let src: Vec<Complex64> = (0..n * n * n).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let conv = Convolver::new(kn, n);
        let kt = conv.kernel_transform(&table);
        let st = conv.source_transform(&src);
        let prod: Vec<Complex64> = kt.iter().zip(&st).map(|(a, b)| a * b).collect();
        let out = conv.extract(prod, -1, 5);
        for t in [[-1i64, -1, -1], [2, 3, 0], [3, 3, 3]] {
            let mut s = c(0.0);
            for i in 0..n as i64 {
                for j in 0..n as i64 {
                    for k in 0..n as i64 {
                        let d = [t[0] - i, t[1] - j, t[2] - k];
                        if d.iter().all(|x| x.abs() <= kn as i64) {
                            let ti = (((d[0] + kn as i64) * kw as i64 + d[1] + kn as i64) * kw as i64 + d[2] + kn as i64) as usize;
                            s += table[ti] * src[((i * n as i64 + j) * n as i64 + k) as usize];
                        }
                    }
                }
            }
            let oi = (((t[0] + 1) * 5 + t[1] + 1) * 5 + t[2] + 1) as usize;
            assert!((out[oi] - s).norm() < 1e-9, "{} vs {}", out[oi], s);
        }
    }

    #[test]
    fn refinement_interpolates_smooth_fields() {
        let g = GridSpec::centered(16, 0.5).unwrap();
        let prof = |r: &Vec3| c((-r.norm_squared() / 1.5).exp() * (1.0 + 0.2 * r.y));
        let f = SpinorField::from_fn(g, |r| Spinor::new(prof(r), c(0.0), prof(r) * Complex64::i(), c(0.0)));
        let fine = refine_field(&f, 2);
        assert_eq!(fine.grid.n, 32);
        for idx in [0, 4000, 17000, 32767] {
            let r = fine.grid.point(idx);
            assert!((fine.data[idx][0] - prof(&r)).norm() < 1e-6);
            assert!((fine.data[idx][2] - prof(&r) * Complex64::i()).norm() < 1e-6);
        }
    }

    #[test]
    fn good_sizes() {
        assert_eq!(good_size(97), 100);
        assert_eq!(good_size(64), 64);
        assert_eq!(good_size(7), 8);
    }
}
