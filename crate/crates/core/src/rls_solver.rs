//! Nystrom discretization of the modified Lippmann-Schwinger equation
//!
//! (I + (2 pi)^{-3/2} B) psi = V1 phi0,   B f(r) = int V1(r) B(r - s) V1(s) W1(s) f(s) ds,
//!
//! its direct and Born solutions, recovery of phi from psi, and the smallest
//! singular value scan that flags exceptional energies.
//!
//! Dense vectors and matrices use point-major, spinor-minor indexing: entry
//! 4 p + a is spinor component a at grid point p.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirac_algebra::{eigen_h0, h0, MassCharge, Momentum3};
use crate::error::{Result, RlsError};
use crate::fourier::Spectral3;
use crate::green_kernel::lattice::ALL_TERMS;
use crate::green_kernel::{
    apply_kernel_on, inv_two_pi_32, smooth_step, Branch, DiracCoeffs, KernelConvolver, KernelTerm, LatticeKernel, OffGridKernel, QuadratureSpec,
    SingularCorrection, SpectralParam,
};
use crate::grid::{GridSpec, SpinorField};
use crate::linalg::{c, Matrix4, Spinor, Vec3};
use crate::potential::{factorize_on_grid, FactorCoeffs, PotentialSpec};

/// Energies closer than this fraction of m to the threshold |lambda| = m are refused.
pub const THRESHOLD_MARGIN: f64 = 1e-3;

/// Incident plane wave e^{i k.r} g_n(k) with lambda = -E(k) for n = 1, 2 and +E(k) for n = 3, 4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterChannel {
    pub k: Momentum3,
    pub n: usize,
    pub lambda: f64,
    pub branch: Branch,
}

impl ScatterChannel {
    pub fn new(k: Momentum3, n: usize, branch: Branch, mc: &MassCharge) -> Result<Self> {
        if !(1..=4).contains(&n) {
            return Err(RlsError::Solver(format!("channel index must be in 1..=4, got {n}")));
        }
        if !k.iter().all(|x| x.is_finite()) {
            return Err(RlsError::Solver("incident momentum must be finite".into()));
        }
        let sign = if n <= 2 { -1.0 } else { 1.0 };
        Ok(Self { k, n, lambda: sign * mc.energy(&k), branch })
    }

    /// Channel n = 3 (or 1 for negative lambda) along `dir` with the on-shell momentum of `lambda`.
    pub fn from_energy(lambda: f64, dir: Vec3, branch: Branch, mc: &MassCharge) -> Result<Self> {
        let m1 = crate::green_kernel::m1_real(lambda, mc)?;
        let nrm = dir.norm();
        if !(nrm > 0.0) {
            return Err(RlsError::Solver("incident direction must be nonzero".into()));
        }
        Self::new(dir * (m1 / nrm), if lambda > 0.0 { 3 } else { 1 }, branch, mc)
    }

    pub fn polarization(&self, mc: &MassCharge) -> Spinor {
        eigen_h0(&self.k, mc, false).g[self.n - 1]
    }

    /// Kernel parameter; enforces the exclusion margin around the threshold.
    pub fn spectral_param(&self, mc: &MassCharge) -> Result<SpectralParam> {
        spectral_param_checked(self.lambda, self.branch, mc)
    }
}

fn spectral_param_checked(lambda: f64, branch: Branch, mc: &MassCharge) -> Result<SpectralParam> {
    if !(lambda.abs() - mc.m >= THRESHOLD_MARGIN * mc.m) {
        return Err(RlsError::Threshold { lambda, m: mc.m });
    }
    SpectralParam::real(lambda, branch, mc)
}

pub fn incident_wave(ch: &ScatterChannel, grid: &GridSpec, mc: &MassCharge) -> SpinorField {
    let g = ch.polarization(mc);
    SpinorField::from_fn(*grid, |r| g * Complex64::from_polar(1.0, ch.k.dot(r)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Direct,
    Born,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: SolveMethod,
    /// Relative tolerance of the Born iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest grid point count admitted to dense assembly.
    pub cap_points: usize,
    /// lambda is declared exceptional when sigma_min < sigma_threshold ||I + K||.
    pub sigma_threshold: f64,
    pub quad: QuadratureSpec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { method: SolveMethod::Direct, tol: 1e-10, max_iter: 500, cap_points: 12 * 12 * 12, sigma_threshold: 1e-6, quad: QuadratureSpec::default() }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.quad.validate()?;
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.sigma_threshold >= 0.0) {
            return Err(RlsError::Solver("tol, max_iter and sigma_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Dense matrix of B with blocks h^3 V1(r) B(r - s) V1(s) W1(s).
pub struct DiscretizedOperator {
    pub matrix: Mat<Complex64>,
    pub grid: GridSpec,
    pub lambda: f64,
    pub branch: Branch,
    pub terms: Vec<KernelTerm>,
    pub correction: SingularCorrection,
}

impl DiscretizedOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.norm_l2()
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim()).all(|j| self.matrix.col_as_slice(j).iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// I + (2 pi)^{-3/2} B
    pub fn system_matrix(&self) -> Mat<Complex64> {
        let s = inv_two_pi_32();
        Mat::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * s + if i == j { c(1.0) } else { c(0.0) })
    }
}

struct Factors {
    v1: Vec<DiracCoeffs>,
    w1: Vec<DiracCoeffs>,
}

impl Factors {
    fn new(spec: &PotentialSpec, grid: &GridSpec) -> Self {
        let f: Vec<FactorCoeffs> = factorize_on_grid(spec, grid);
        Self { v1: f.iter().map(|x| x.v1).collect(), w1: f.iter().map(|x| x.w1).collect() }
    }

    /// V1 W1 u
    fn right(&self, u: &[Spinor]) -> Vec<Spinor> {
        u.par_iter().enumerate().map(|(p, s)| self.v1[p].apply(&self.w1[p].apply(s))).collect()
    }

    fn left(&self, u: &[Spinor]) -> Vec<Spinor> {
        u.par_iter().enumerate().map(|(p, s)| self.v1[p].apply(s)).collect()
    }
}

fn check_cap(grid: &GridSpec, cap: usize) -> Result<()> {
    if grid.len() > cap {
        return Err(RlsError::MemoryBudget { points: grid.len(), cap });
    }
    Ok(())
}

pub fn assemble_operator(ch: &ScatterChannel, grid: &GridSpec, spec: &PotentialSpec, mc: &MassCharge, cfg: &SolverConfig) -> Result<DiscretizedOperator> {
    assemble_at(ch.lambda, ch.branch, grid, spec, mc, cfg, &ALL_TERMS)
}

/// Assembly restricted to a subset of the kernel terms Q, (2 pi)^{-3/2} z^2 Q*J and z J.
pub fn assemble_terms(ch: &ScatterChannel, grid: &GridSpec, spec: &PotentialSpec, mc: &MassCharge, cfg: &SolverConfig, terms: &[KernelTerm]) -> Result<DiscretizedOperator> {
    assemble_at(ch.lambda, ch.branch, grid, spec, mc, cfg, terms)
}

pub fn assemble_at(lambda: f64, branch: Branch, grid: &GridSpec, spec: &PotentialSpec, mc: &MassCharge, cfg: &SolverConfig, terms: &[KernelTerm]) -> Result<DiscretizedOperator> {
    check_cap(grid, cfg.cap_points)?;
    spec.validate()?;
    let sp = spectral_param_checked(lambda, branch, mc)?;
    let np = grid.len();
    let dim = 4 * np;
    let mut matrix = Mat::<Complex64>::zeros(dim, dim);
    let meta = |matrix| DiscretizedOperator { matrix, grid: *grid, lambda, branch, terms: terms.to_vec(), correction: cfg.quad.correction };
    if spec.is_zero() {
        return Ok(meta(matrix));
    }
    let n = grid.n;
    let kn = n - 1;
    let kernel = LatticeKernel::with_terms(grid.h, kn, sp, &cfg.quad, mc, terms)?;
    let table: Vec<Matrix4> = kernel.table().par_iter().map(|d| d.to_matrix()).collect();
    drop(kernel);
    let fac = factorize_on_grid(spec, grid);
    let h3 = grid.cell_volume();
    let left: Vec<Matrix4> = fac.iter().map(|f| f.v1.to_matrix() * c(h3)).collect();
    let right: Vec<Matrix4> = fac.iter().map(|f| f.v1.to_matrix() * f.w1.to_matrix()).collect();
    let w = 2 * n - 1;
    matrix.as_mut().par_col_chunks_mut(4).enumerate().for_each(|(s, mut chunk)| {
        let [si, sj, sk] = grid.unravel(s);
        for r in 0..np {
            let [ri, rj, rk] = grid.unravel(r);
            let slot = ((ri + kn - si) * w + (rj + kn - sj)) * w + (rk + kn - sk);
            let blk = left[r] * table[slot] * right[s];
            for a in 0..4 {
                for b in 0..4 {
                    chunk[(4 * r + a, b)] = blk[(a, b)];
                }
            }
        }
    });
    Ok(meta(matrix))
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    /// ||(I + K) psi - rhs|| / ||rhs||
    pub residual: f64,
    pub sigma_min: Option<f64>,
    pub operator_norm: Option<f64>,
    /// Born path: contraction factor estimated from successive increments.
    pub contraction: Option<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub grid: GridSpec,
    pub method: SolveMethod,
    pub lambda: f64,
    pub branch: Branch,
}

fn flat(u: &[Spinor]) -> Vec<Complex64> {
    u.iter().flat_map(|s| s.iter().copied()).collect()
}

fn col(v: &[Complex64]) -> Mat<Complex64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn col_norm(x: &Mat<Complex64>) -> f64 {
    x.norm_l2()
}

/// Deterministic start vector for the eigenvalue iterations.
fn start_vector(dim: usize) -> Mat<Complex64> {
    let g = 0.618_033_988_749_895;
    let mut x = Mat::from_fn(dim, 1, |i, _| Complex64::from_polar(1.0 + 0.5 * ((i as f64 * g).fract() - 0.5), i as f64 * g * std::f64::consts::TAU));
    let nrm = col_norm(&x);
    x.col_as_slice_mut(0).iter_mut().for_each(|z| *z /= nrm);
    x
}

/// ||A|| by power iteration on A^H A.
pub fn operator_norm(a: &Mat<Complex64>, iters: usize) -> f64 {
    let mut x = start_vector(a.nrows());
    let mut est = 0.0;
    for _ in 0..iters {
        let y = a * &x;
        let z = a.adjoint() * &y;
        let nz = col_norm(&z);
        if nz == 0.0 {
            return 0.0;
        }
        let next = nz.sqrt();
        x = z * faer::Scale(c(1.0 / nz));
        if (next - est).abs() < 1e-6 * next {
            return next;
        }
        est = next;
    }
    est
}

/// sigma_min of A from inverse iteration on (A^H A)^{-1} with the LU factors of A.
fn sigma_min_lu(lu: &faer::linalg::solvers::PartialPivLu<Complex64>, dim: usize, iters: usize) -> f64 {
    let mut x = start_vector(dim);
    let mut est = f64::INFINITY;
    for _ in 0..iters {
        let mut z = x.clone();
        lu.solve_in_place(z.as_mut());
        lu.solve_adjoint_in_place(z.as_mut());
        // Rayleigh quotient of (A^H A)^{-1} at the unit vector x
        let rq: Complex64 = (0..dim).map(|i| x[(i, 0)].conj() * z[(i, 0)]).sum();
        let next = 1.0 / rq.re.max(f64::MIN_POSITIVE).sqrt();
        let nz = col_norm(&z);
        if !nz.is_finite() || nz == 0.0 {
            return 0.0;
        }
        x = z * faer::Scale(c(1.0 / nz));
        if (next - est).abs() < 1e-9 * next {
            return next;
        }
        est = next;
    }
    est
}

/// Smallest singular value of I + (2 pi)^{-3/2} B together with ||I + (2 pi)^{-3/2} B||.
pub fn sigma_min(op: &DiscretizedOperator) -> (f64, f64) {
    let a = op.system_matrix();
    let lu = a.partial_piv_lu();
    (sigma_min_lu(&lu, a.nrows(), 200), operator_norm(&a, 100))
}

pub struct Solution {
    pub psi: SpinorField,
    pub report: SolveReport,
}

pub fn solve_modified(ch: &ScatterChannel, grid: &GridSpec, spec: &PotentialSpec, mc: &MassCharge, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let t0 = Instant::now();
    ch.spectral_param(mc)?;
    let report = |residual, sigma_min, operator_norm, contraction, iterations| SolveReport {
        residual,
        sigma_min,
        operator_norm,
        contraction,
        iterations,
        wall_time_s: t0.elapsed().as_secs_f64(),
        grid: *grid,
        method: cfg.method,
        lambda: ch.lambda,
        branch: ch.branch,
    };
    if spec.is_zero() {
        return Ok(Solution { psi: SpinorField::zeros(*grid), report: report(0.0, Some(1.0), Some(1.0), None, 0) });
    }
    let fac = Factors::new(spec, grid);
    let phi0 = incident_wave(ch, grid, mc);
    let rhs = fac.left(&phi0.data);
    match cfg.method {
        SolveMethod::Direct => {
            let op = assemble_operator(ch, grid, spec, mc, cfg)?;
            let a = op.system_matrix();
            drop(op);
            let b = col(&flat(&rhs));
            let lu = a.partial_piv_lu();
            let x = lu.solve(&b);
            let res = col_norm(&(&a * &x - &b)) / col_norm(&b).max(f64::MIN_POSITIVE);
            let smin = sigma_min_lu(&lu, a.nrows(), 200);
            let anorm = operator_norm(&a, 100);
            let threshold = cfg.sigma_threshold * anorm;
            if smin < threshold {
                return Err(RlsError::Exceptional { lambda: ch.lambda, sigma: smin, threshold });
            }
            let psi = SpinorField::from_flat(*grid, x.col_as_slice(0))?;
            Ok(Solution { psi, report: report(res, Some(smin), Some(anorm), None, 1) })
        }
        SolveMethod::Born => {
            let k = FftOperator::new(ch.spectral_param(mc)?, grid, &fac, mc, &cfg.quad)?;
            let rhs_norm = l2(&rhs);
            let mut psi = rhs.clone();
            let mut prev_inc = f64::INFINITY;
            let mut contraction = None;
            for it in 1..=cfg.max_iter {
                let kp = k.apply(&psi, &fac);
                let next: Vec<Spinor> = rhs.iter().zip(&kp).map(|(b, x)| b - x).collect();
                let inc = l2(&next.iter().zip(&psi).map(|(a, b)| a - b).collect::<Vec<_>>());
                psi = next;
                if prev_inc.is_finite() && prev_inc > 0.0 {
                    contraction = Some(inc / prev_inc);
                }
                if !inc.is_finite() || (it > 8 && contraction.is_some_and(|r| r > 1.0) && inc > rhs_norm) {
                    return Err(RlsError::NonConvergence { iterations: it, residual: inc / rhs_norm });
                }
                prev_inc = inc;
                if inc <= cfg.tol * l2(&psi).max(f64::MIN_POSITIVE) {
                    let kp = k.apply(&psi, &fac);
                    let r: Vec<Spinor> = psi.iter().zip(&kp).zip(&rhs).map(|((p, x), b)| p + x - b).collect();
                    let res = l2(&r) / rhs_norm.max(f64::MIN_POSITIVE);
                    let field = SpinorField::from_vec(*grid, psi)?;
                    let lower = contraction.map(|q| (1.0 - q).max(0.0));
                    return Ok(Solution { psi: field, report: report(res, lower, None, contraction, it) });
                }
            }
            Err(RlsError::NonConvergence { iterations: cfg.max_iter, residual: prev_inc / rhs_norm.max(f64::MIN_POSITIVE) })
        }
    }
}

fn l2(u: &[Spinor]) -> f64 {
    u.iter().map(|s| s.norm_squared()).sum::<f64>().sqrt()
}

/// K psi = (2 pi)^{-3/2} h^3 V1 sum_s B(r - s) V1(s) W1(s) psi(s) applied by FFT convolution.
struct FftOperator {
    conv: KernelConvolver,
    n: usize,
}

impl FftOperator {
    fn new(sp: SpectralParam, grid: &GridSpec, _fac: &Factors, mc: &MassCharge, quad: &QuadratureSpec) -> Result<Self> {
        let kernel = LatticeKernel::new(grid.h, grid.n - 1, sp, quad, mc)?;
        let conv = KernelConvolver::new(&kernel, grid.n, c(inv_two_pi_32() * grid.cell_volume()));
        Ok(Self { conv, n: grid.n })
    }

    fn apply(&self, psi: &[Spinor], fac: &Factors) -> Vec<Spinor> {
        let rho = fac.right(psi);
        let comps: [Vec<Complex64>; 4] = std::array::from_fn(|a| rho.iter().map(|s| s[a]).collect());
        let out = self.conv.apply(&comps, 0, self.n);
        let u: Vec<Spinor> = (0..psi.len()).map(|i| Spinor::new(out[0][i], out[1][i], out[2][i], out[3][i])).collect();
        fac.left(&u)
    }
}

/// phi = phi0 - (2 pi)^{-3/2} sum_s h^3 B(r - s) V1(s) W1(s) psi(s) on the solve grid.
pub fn recover_phi(psi: &SpinorField, ch: &ScatterChannel, spec: &PotentialSpec, mc: &MassCharge, quad: &QuadratureSpec) -> Result<SpinorField> {
    let grid = psi.grid;
    let phi0 = incident_wave(ch, &grid, mc);
    if spec.is_zero() {
        return Ok(phi0);
    }
    let fac = Factors::new(spec, &grid);
    let rho = SpinorField::from_vec(grid, fac.right(&psi.data))?;
    let conv = apply_kernel_on(&rho, &grid, ch.spectral_param(mc)?, mc, 1, quad)?;
    Ok(phi0.sub(&conv))
}

/// The same sum at arbitrary points, with the kernel evaluated directly.
pub fn recover_phi_at(psi: &SpinorField, ch: &ScatterChannel, spec: &PotentialSpec, mc: &MassCharge, quad: &QuadratureSpec, points: &[Vec3]) -> Result<Vec<Spinor>> {
    let grid = psi.grid;
    let g = ch.polarization(mc);
    let incident = |r: &Vec3| g * Complex64::from_polar(1.0, ch.k.dot(r));
    if spec.is_zero() {
        return Ok(points.iter().map(incident).collect());
    }
    let sp = ch.spectral_param(mc)?;
    let fac = Factors::new(spec, &grid);
    let rho = fac.right(&psi.data);
    let center = grid.center();
    let half_diag = 0.5 * 3f64.sqrt() * grid.extent();
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        let d = (p - center).norm();
        (lo.min(d - half_diag), hi.max(d + half_diag))
    });
    let table = OffGridKernel::new(lo.max(2.0 * grid.h), hi, sp, quad, mc)?;
    // separations within one lattice step carry the corrected weights of the solve grid
    let lattice = LatticeKernel::new(grid.h, 1, sp, quad, mc)?;
    let near = |d: &Vec3| -> Option<[i64; 3]> {
        let u = d / grid.h;
        let k = [u.x.round(), u.y.round(), u.z.round()];
        let on = (0..3).all(|a| (u[a] - k[a]).abs() < 1e-9);
        (on && k.iter().map(|x| x.abs()).sum::<f64>() <= 1.0).then(|| k.map(|x| x as i64))
    };
    let scale = c(inv_two_pi_32() * grid.cell_volume());
    points
        .par_iter()
        .map(|r| {
            let mut acc = Spinor::zeros();
            for (s, x) in rho.iter().enumerate() {
                let d = r - grid.point(s);
                let b = match near(&d) {
                    Some(k) => lattice.coeffs(k),
                    None => table.coeffs(&d)?,
                };
                acc += b.apply(x);
            }
            Ok(incident(r) - acc * scale)
        })
        .collect()
}

/// sigma_min of I + (2 pi)^{-3/2} B(lambda) for each lambda.
pub fn sigma_min_scan(lambdas: &[f64], grid: &GridSpec, spec: &PotentialSpec, mc: &MassCharge, branch: Branch, cfg: &SolverConfig) -> Result<Vec<(f64, f64)>> {
    lambdas
        .iter()
        .map(|&l| {
            if spec.is_zero() {
                spectral_param_checked(l, branch, mc)?;
                return Ok((l, 1.0));
            }
            let op = assemble_at(l, branch, grid, spec, mc, cfg, &ALL_TERMS)?;
            Ok((l, sigma_min(&op).0))
        })
        .collect()
}

/// max over testers f of |<phi, (L - lambda) f>| / (||phi|| ||f||), with L0 applied
/// spectrally and V pointwise.
pub fn weak_residual(phi: &SpinorField, lambda: f64, spec: &PotentialSpec, mc: &MassCharge, testers: &[SpinorField]) -> Result<f64> {
    let pn = phi.norm();
    if pn == 0.0 {
        return Ok(0.0);
    }
    let spectral = Spectral3::new(phi.grid);
    let mut worst = 0.0f64;
    for f in testers {
        if f.grid != phi.grid {
            return Err(RlsError::Grid("tester and field live on different grids".into()));
        }
        let mut lf = spectral.apply_symbol(f, |q| h0(q, mc) - Matrix4::identity() * c(lambda));
        for (idx, v) in lf.data.iter_mut().enumerate() {
            *v += spec.coeffs(&phi.grid.point(idx)).apply(&f.data[idx]);
        }
        let fnorm = f.norm();
        if fnorm > 0.0 {
            worst = worst.max(phi.inner(&lf).norm() / (pn * fnorm));
        }
    }
    Ok(worst)
}

fn random_spinor(rng: &mut StdRng) -> Spinor {
    Spinor::from_fn(|_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Smooth testers: random spinors times modulated Gaussians of width
/// w = sqrt(R h / 2 pi), cut off smoothly between R/2 and R so that the support
/// stays strictly inside the grid. The width balances the cutoff tail against the
/// spectral tail at the Nyquist wavenumber.
pub fn smooth_testers(grid: &GridSpec, count: usize, seed: u64) -> Vec<SpinorField> {
    let mut rng = StdRng::seed_from_u64(seed);
    let center = grid.center();
    let half = 0.5 * grid.extent();
    (0..count)
        .map(|_| {
            let radius = half * rng.random_range(0.7..0.85);
            let w2 = radius * grid.h / (2.0 * std::f64::consts::PI);
            let room = (half - radius - 2.0 * grid.h).max(0.0);
            let c0 = center + Vec3::from_fn(|_, _| rng.random_range(-room..=room));
            let p = Vec3::from_fn(|_, _| rng.random_range(-0.5..0.5));
            let s = random_spinor(&mut rng);
            SpinorField::from_fn(*grid, |r| {
                let d = (r - c0).norm();
                let env = (-d * d / (2.0 * w2)).exp() * smooth_step(2.0 * d / radius - 1.0);
                s * Complex64::from_polar(env, p.dot(r))
            })
        })
        .collect()
}

/// Non-solution control: a random superposition of off-shell plane waves.
pub fn random_control(grid: &GridSpec, seed: u64) -> SpinorField {
    let mut rng = StdRng::seed_from_u64(seed);
    let waves: Vec<(Vec3, Spinor)> = (0..6).map(|_| (Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0)), random_spinor(&mut rng))).collect();
    SpinorField::from_fn(*grid, |r| waves.iter().fold(Spinor::zeros(), |acc, (p, s)| acc + s * Complex64::from_polar(1.0, p.dot(r))))
}

/// CSV with columns i, j, k, x, y, z and Re/Im of the four components.
pub fn write_field_csv<W: Write>(field: &SpinorField, mut w: W) -> Result<()> {
    writeln!(w, "i,j,k,x,y,z,re0,im0,re1,im1,re2,im2,re3,im3")?;
    for (idx, s) in field.data.iter().enumerate() {
        let [i, j, k] = field.grid.unravel(idx);
        let p = field.grid.point(idx);
        write!(w, "{i},{j},{k},{:.17e},{:.17e},{:.17e}", p.x, p.y, p.z)?;
        for z in s.iter() {
            write!(w, ",{:.17e},{:.17e}", z.re, z.im)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub const DUMP_MAGIC: &[u8; 8] = b"DRLSFLD1";

/// Little-endian dump: magic, n (u64), h and origin (4 x f64), then for every point
/// in grid order the four components as (re, im) f64 pairs.
pub fn write_field_binary<W: Write>(field: &SpinorField, mut w: W) -> Result<()> {
    let g = field.grid;
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(g.n as u64).to_le_bytes())?;
    for x in [g.h, g.origin[0], g.origin[1], g.origin[2]] {
        w.write_all(&x.to_le_bytes())?;
    }
    for s in &field.data {
        for z in s.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<SpinorField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(RlsError::Grid("not a field dump".into()));
    }
    let mut b = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut b)?;
        Ok(b)
    };
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let mut head = [0.0; 4];
    for x in head.iter_mut() {
        *x = f64::from_le_bytes(next(&mut r)?);
    }
    let grid = GridSpec::new(n, head[0], [head[1], head[2], head[3]])?;
    let mut v = Vec::with_capacity(4 * grid.len());
    for _ in 0..4 * grid.len() {
        let re = f64::from_le_bytes(next(&mut r)?);
        let im = f64::from_le_bytes(next(&mut r)?);
        v.push(Complex64::new(re, im));
    }
    SpinorField::from_flat(grid, &v)
}

pub fn write_field_files(field: &SpinorField, csv: Option<&Path>, bin: Option<&Path>) -> Result<()> {
    if let Some(p) = csv {
        write_field_csv(field, std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    if let Some(p) = bin {
        write_field_binary(field, std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    Ok(())
}
