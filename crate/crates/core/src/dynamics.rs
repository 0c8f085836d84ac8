//! Time-dependent Dirac evolution on a periodic grid: exact free propagation per
//! Fourier mode, operator splitting for the full operator, and the derived wave
//! and scattering operator estimates.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirac_algebra::{eigen_h0, h0, MassCharge};
use crate::error::{Result, RlsError};
use crate::fourier::{wavenumbers, Fft3, Spectral3};
use crate::green_kernel::DiracCoeffs;
use crate::grid::{GridSpec, SpinorField};
use crate::linalg::{c, Matrix4, Spinor, Vec3, I};
use crate::potential::PotentialSpec;
use crate::rls_solver::{recover_phi, solve_modified, ScatterChannel, SolverConfig};
use crate::scattering::{amplitude, AmplitudeForm, DirectionSet};

/// Gaussian packet F psi(p) ~ e^{-|p - p0|^2/(4 sigma_p^2)} e^{-i p.r0} g_n(p)/|g_n(p)|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePacketSpec {
    pub p0: Vec3,
    pub sigma_p: f64,
    pub n: usize,
    pub r0: Vec3,
}

impl WavePacketSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_p > 0.0) || !(1..=4).contains(&self.n) {
            return Err(RlsError::Dynamics("packet needs sigma_p > 0 and a channel in 1..=4".into()));
        }
        if !(self.p0.norm() > 4.0 * self.sigma_p) {
            return Err(RlsError::Dynamics(format!("packet momentum {} must exceed 4 sigma_p = {}", self.p0.norm(), 4.0 * self.sigma_p)));
        }
        Ok(())
    }

    /// Normalized samples on `grid`; the grid must resolve |p0| + 6 sigma_p.
    pub fn build(&self, grid: &GridSpec, mc: &MassCharge) -> Result<SpinorField> {
        self.validate()?;
        if self.p0.norm() + 6.0 * self.sigma_p > PI / grid.h {
            return Err(RlsError::Grid(format!("spacing {} does not resolve the packet momenta", grid.h)));
        }
        let sp = Spectral3::new(*grid);
        let modes: Vec<Spinor> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let p = sp.momentum(idx);
                let env = (-(p - self.p0).norm_squared() / (4.0 * self.sigma_p * self.sigma_p)).exp();
                if env < 1e-300 {
                    return Spinor::zeros();
                }
                eigen_h0(&p, mc, true).g[self.n - 1] * Complex64::from_polar(env, -p.dot(&self.r0))
            })
            .collect();
        let comps = std::array::from_fn(|a| modes.iter().map(|s| s[a]).collect());
        let f = sp.field_from_momentum(comps);
        let nrm = f.norm();
        Ok(f.scaled(c(1.0 / nrm)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    pub dt: f64,
    /// Horizon used by the norm-drift run and as the default S-operator time.
    pub t_max: f64,
    /// 1 = Lie, 2 = Strang.
    pub order: u8,
    pub grid: GridSpec,
    /// Width of the boundary layer, as a fraction of the box extent.
    pub edge_layer: f64,
    /// Largest admitted fraction of ||u||^2 inside the boundary layer.
    pub edge_tol: f64,
    /// Steps between boundary checks.
    pub check_every: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 10.0,
            order: 2,
            grid: GridSpec::centered(32, 0.5).expect("default grid"),
            edge_layer: 0.1,
            edge_tol: 1e-6,
            check_every: 10,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_max >= self.dt) {
            return Err(RlsError::Dynamics(format!("need dt > 0 and t_max >= dt, got dt = {}, t_max = {}", self.dt, self.t_max)));
        }
        if !(self.order == 1 || self.order == 2) {
            return Err(RlsError::Dynamics(format!("splitting order must be 1 or 2, got {}", self.order)));
        }
        if !(self.edge_layer > 0.0 && self.edge_layer < 0.5) || !(self.edge_tol > 0.0) || self.check_every == 0 {
            return Err(RlsError::Dynamics("edge_layer must be in (0, 0.5), edge_tol and check_every positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PropagationStats {
    pub steps: usize,
    pub dt: f64,
    pub max_edge_weight: f64,
    pub warnings: Vec<String>,
}

type Comps = [Vec<Complex64>; 4];

fn for_each_point(u: &mut Comps, f: impl Fn(usize, Spinor) -> Spinor + Sync) {
    let [a, b, cc, d] = u;
    a.par_iter_mut().zip(b.par_iter_mut()).zip(cc.par_iter_mut()).zip(d.par_iter_mut()).enumerate().for_each(|(i, (((x0, x1), x2), x3))| {
        let s = f(i, Spinor::new(*x0, *x1, *x2, *x3));
        *x0 = s[0];
        *x1 = s[1];
        *x2 = s[2];
        *x3 = s[3];
    });
}

/// exp(-i tau (m beta + alpha.q)) = cos(tau E) - i sin(tau E)/E (m beta + alpha.q).
fn free_coeffs(q: &Vec3, e: f64, m: f64, tau: f64) -> DiracCoeffs {
    let (s, co) = (tau * e).sin_cos();
    let sinc = if e == 0.0 { tau } else { s / e };
    let k = -I * sinc;
    DiracCoeffs { id: c(co), beta: k * m, alpha: [k * q.x, k * q.y, k * q.z] }
}

/// exp(-i tau V) for V = s I + a.alpha in closed form.
fn potential_step(v: &DiracCoeffs, tau: f64) -> DiracCoeffs {
    let s = v.id.re;
    let a = [v.alpha[0].re, v.alpha[1].re, v.alpha[2].re];
    let an = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let ph = Complex64::from_polar(1.0, -tau * s);
    let (sn, cs) = (tau * an).sin_cos();
    let k = if an == 0.0 { c(0.0) } else { -I * ph * (sn / an) };
    DiracCoeffs { id: ph * cs, beta: c(0.0), alpha: a.map(|x| k * x) }
}

/// Split-step propagator bound to one grid, mass and potential.
pub struct Propagator {
    grid: GridSpec,
    fft: Fft3,
    mc: MassCharge,
    modes: Vec<(Vec3, f64)>,
    potential: Option<Vec<DiracCoeffs>>,
    sup_v: f64,
    edge_mask: Vec<bool>,
}

impl Propagator {
    pub fn new(grid: &GridSpec, spec: &PotentialSpec, mc: &MassCharge, edge_layer: f64) -> Result<Self> {
        spec.validate()?;
        let k = wavenumbers(grid.n, grid.h);
        let modes = (0..grid.len())
            .map(|idx| {
                let [i, j, l] = grid.unravel(idx);
                let q = Vec3::new(k[i], k[j], k[l]);
                (q, mc.energy(&q))
            })
            .collect();
        let potential = (!spec.is_zero()).then(|| (0..grid.len()).into_par_iter().map(|i| spec.coeffs(&grid.point(i))).collect::<Vec<_>>());
        let sup_v = if spec.is_zero() { 0.0 } else { spec.sup_norm_on(grid)? };
        let layer = edge_layer * grid.extent();
        let edge_mask = (0..grid.len()).map(|i| grid.distance_to_boundary(&grid.point(i)) < layer).collect();
        Ok(Self { grid: *grid, fft: Fft3::cubic(grid.n), mc: *mc, modes, potential, sup_v, edge_mask })
    }

    fn check_grid(&self, f: &SpinorField) -> Result<()> {
        if f.grid != self.grid {
            return Err(RlsError::Grid("field and propagator live on different grids".into()));
        }
        Ok(())
    }

    fn free_step(&self, u: &mut Comps, tau: f64) {
        for x in u.iter_mut() {
            self.fft.forward(x);
        }
        let norm = 1.0 / self.grid.len() as f64;
        let m = self.mc.m;
        for_each_point(u, |i, s| {
            let (q, e) = &self.modes[i];
            free_coeffs(q, *e, m, tau).apply(&s) * c(norm)
        });
        for x in u.iter_mut() {
            self.fft.inverse(x);
        }
    }

    fn potential_step(&self, u: &mut Comps, steps: &[DiracCoeffs]) {
        for_each_point(u, |i, s| steps[i].apply(&s));
    }

    pub fn edge_weight(&self, u: &Comps) -> f64 {
        let (edge, total) = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let w: f64 = u.iter().map(|x| x[i].norm_sqr()).sum();
                (if self.edge_mask[i] { w } else { 0.0 }, w)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }

    /// Exact free evolution e^{-i t L0}.
    pub fn free(&self, f: &SpinorField, t: f64) -> Result<SpinorField> {
        self.check_grid(f)?;
        let mut u = f.components();
        self.free_step(&mut u, t);
        Ok(SpinorField::from_components(self.grid, &u))
    }

    /// e^{-i t L} by operator splitting; `t` may be negative.
    pub fn evolve(&self, f: &SpinorField, t: f64, cfg: &PropagationConfig) -> Result<(SpinorField, PropagationStats)> {
        self.check_grid(f)?;
        cfg.validate()?;
        let mut stats = PropagationStats::default();
        let mut u = f.components();
        let check = |u: &Comps, elapsed: f64, stats: &mut PropagationStats| -> Result<()> {
            let w = self.edge_weight(u);
            stats.max_edge_weight = stats.max_edge_weight.max(w);
            if w > cfg.edge_tol {
                return Err(RlsError::BoxEscape { t: elapsed, edge_weight: w });
            }
            Ok(())
        };
        check(&u, 0.0, &mut stats)?;
        let Some(v) = &self.potential else {
            self.free_step(&mut u, t);
            check(&u, t, &mut stats)?;
            stats.steps = 1;
            stats.dt = t;
            return Ok((SpinorField::from_components(self.grid, &u), stats));
        };
        if t == 0.0 {
            return Ok((f.clone(), stats));
        }
        let n = (t.abs() / cfg.dt - 1e-9).ceil().max(1.0) as usize;
        let tau = t / n as f64;
        stats.steps = n;
        stats.dt = tau;
        if tau.abs() * self.sup_v > 0.5 {
            stats.warnings.push(format!("dt sup|V| = {:.3} exceeds 0.5; splitting error may dominate", tau.abs() * self.sup_v));
        }
        let vstep: Vec<DiracCoeffs> = v.par_iter().map(|x| potential_step(x, tau)).collect();
        match cfg.order {
            1 => {
                for j in 0..n {
                    self.potential_step(&mut u, &vstep);
                    self.free_step(&mut u, tau);
                    if (j + 1) % cfg.check_every == 0 {
                        check(&u, (j + 1) as f64 * tau, &mut stats)?;
                    }
                }
            }
            _ => {
                self.free_step(&mut u, 0.5 * tau);
                for j in 0..n {
                    self.potential_step(&mut u, &vstep);
                    self.free_step(&mut u, if j + 1 == n { 0.5 * tau } else { tau });
                    if (j + 1) % cfg.check_every == 0 {
                        check(&u, (j + 1) as f64 * tau, &mut stats)?;
                    }
                }
            }
        }
        check(&u, t, &mut stats)?;
        Ok((SpinorField::from_components(self.grid, &u), stats))
    }

    /// Theta(t) = e^{i t L} e^{-i t L0}.
    pub fn theta(&self, t: f64, psi: &SpinorField, cfg: &PropagationConfig) -> Result<(SpinorField, PropagationStats)> {
        if self.potential.is_none() || t == 0.0 {
            self.check_grid(psi)?;
            return Ok((psi.clone(), PropagationStats::default()));
        }
        let u = self.free(psi, t)?;
        self.evolve(&u, -t, cfg)
    }
}

/// F^{-1}[exp(-i t H0(q)) F field]
pub fn free_propagate(field: &SpinorField, t: f64, mc: &MassCharge) -> SpinorField {
    Spectral3::new(field.grid).apply_symbol(field, |q| {
        let e = mc.energy(q);
        let (s, co) = (t * e).sin_cos();
        let sinc = if e == 0.0 { t } else { s / e };
        Matrix4::identity() * c(co) - h0(q, mc) * (I * sinc)
    })
}

pub fn full_propagate(field: &SpinorField, t: f64, cfg: &PropagationConfig, spec: &PotentialSpec, mc: &MassCharge) -> Result<SpinorField> {
    let p = Propagator::new(&cfg.grid, spec, mc, cfg.edge_layer)?;
    Ok(p.evolve(field, t, cfg)?.0)
}

pub fn theta(t: f64, psi: &SpinorField, cfg: &PropagationConfig, spec: &PotentialSpec, mc: &MassCharge) -> Result<SpinorField> {
    let p = Propagator::new(&cfg.grid, spec, mc, cfg.edge_layer)?;
    Ok(p.theta(t, psi, cfg)?.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveOperatorEstimate {
    #[serde(skip)]
    pub field: SpinorField,
    pub times: Vec<f64>,
    /// ||Theta(t_{j+1}) psi - Theta(t_j) psi||
    pub cauchy_differences: Vec<f64>,
    pub strictly_decreasing: bool,
    /// ||W psi|| / ||psi||
    pub norm_ratio: f64,
    pub converged: bool,
    pub max_edge_weight: f64,
    pub warnings: Vec<String>,
}

impl WaveOperatorEstimate {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_from,t_to,cauchy_difference")?;
        for (j, d) in self.cauchy_differences.iter().enumerate() {
            writeln!(w, "{},{},{:.17e}", self.times[j], self.times[j + 1], d)?;
        }
        Ok(())
    }
}

/// The geometric ladder t0, 2 t0, 4 t0, ...
pub fn geometric_ladder(t0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| t0 * 2f64.powi(j as i32)).collect()
}

/// Theta(t_j) psi along the ladder; positive times estimate W+ psi, negative times W- psi.
/// `tol` bounds the last Cauchy difference relative to ||psi||.
pub fn wave_operator_estimate(pkt: &WavePacketSpec, cfg: &PropagationConfig, spec: &PotentialSpec, mc: &MassCharge, ladder: &[f64], tol: f64) -> Result<WaveOperatorEstimate> {
    cfg.validate()?;
    if ladder.is_empty() {
        return Err(RlsError::Dynamics("empty time ladder".into()));
    }
    let psi = pkt.build(&cfg.grid, mc)?;
    let pn = psi.norm();
    if spec.is_zero() {
        return Ok(WaveOperatorEstimate {
            field: psi,
            times: vec![ladder[0]],
            cauchy_differences: Vec::new(),
            strictly_decreasing: true,
            norm_ratio: 1.0,
            converged: true,
            max_edge_weight: 0.0,
            warnings: Vec::new(),
        });
    }
    let p = Propagator::new(&cfg.grid, spec, mc, cfg.edge_layer)?;
    let mut prev: Option<SpinorField> = None;
    let mut diffs = Vec::new();
    let mut max_edge = 0.0f64;
    let mut warnings = Vec::new();
    for &t in ladder {
        let (u, stats) = p.theta(t, &psi, cfg)?;
        max_edge = max_edge.max(stats.max_edge_weight);
        warnings.extend(stats.warnings);
        if let Some(q) = &prev {
            diffs.push(u.sub(q).norm());
        }
        prev = Some(u);
    }
    let field = prev.expect("non-empty ladder");
    let strictly_decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    let converged = diffs.last().is_none_or(|&d| d < tol * pn);
    warnings.dedup();
    Ok(WaveOperatorEstimate {
        norm_ratio: field.norm() / pn,
        field,
        times: ladder.to_vec(),
        cauchy_differences: diffs,
        strictly_decreasing,
        converged,
        max_edge_weight: max_edge,
        warnings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SOperatorResult {
    #[serde(skip)]
    pub field: SpinorField,
    #[serde(skip)]
    pub momentum: [Vec<Complex64>; 4],
    pub t: f64,
    pub norm_ratio: f64,
    /// Overlap of the normalized |p|-histograms of |F S psi|^2 and |F psi|^2 (1 = identical).
    pub shell_overlap: f64,
    pub max_edge_weight: f64,
}

fn shell_histogram(sp: &Spectral3, comps: &Comps, bins: usize, qmax: f64) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for idx in 0..sp.grid.len() {
        let b = (sp.momentum(idx).norm() / qmax * bins as f64) as usize;
        if b < bins {
            h[b] += comps.iter().map(|x| x[idx].norm_sqr()).sum::<f64>();
        }
    }
    let s: f64 = h.iter().sum();
    if s > 0.0 {
        h.iter_mut().for_each(|x| *x /= s);
    }
    h
}

fn s_apply(p: &Propagator, psi: &SpinorField, t: f64, cfg: &PropagationConfig) -> Result<(SpinorField, f64)> {
    if p.potential.is_none() {
        return Ok((psi.clone(), 0.0));
    }
    let u = p.free(psi, t)?;
    let (u, stats) = p.evolve(&u, -2.0 * t, cfg)?;
    Ok((p.free(&u, t)?, stats.max_edge_weight))
}

/// S psi ~ e^{-i T L0} e^{2 i T L} e^{-i T L0} psi, the composition Theta(-T)^* Theta(T).
pub fn s_operator(pkt: &WavePacketSpec, cfg: &PropagationConfig, spec: &PotentialSpec, mc: &MassCharge, t: f64) -> Result<SOperatorResult> {
    cfg.validate()?;
    let psi = pkt.build(&cfg.grid, mc)?;
    let p = Propagator::new(&cfg.grid, spec, mc, cfg.edge_layer)?;
    let (field, edge) = s_apply(&p, &psi, t, cfg)?;
    let sp = Spectral3::new(cfg.grid);
    let momentum = sp.field_to_momentum(&field);
    let qmax = PI / cfg.grid.h;
    let bins = (qmax / sp.dq()).ceil() as usize;
    let a = shell_histogram(&sp, &momentum, bins, qmax);
    let b = shell_histogram(&sp, &sp.field_to_momentum(&psi), bins, qmax);
    let shell_overlap = a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum();
    Ok(SOperatorResult { norm_ratio: field.norm() / psi.norm(), field, momentum, t, shell_overlap, max_edge_weight: edge })
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// Upper edges of the polar-angle bins (radians from the incident direction).
    pub theta_edges: Vec<f64>,
    pub dynamic: Vec<f64>,
    pub stationary: Vec<f64>,
    /// ||a - b|| / ||b|| for the normalized bin vectors a (dynamic) and b (stationary).
    pub shape_discrepancy: f64,
    pub forward_cone: f64,
    pub dynamic_total: f64,
    pub stationary_total: f64,
    /// dynamic_total / stationary_total
    pub ratio: f64,
    pub shell_points: usize,
}

/// Settings of the stationary side and of the angular binning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    /// Propagation time T of the S-operator estimate.
    pub t: f64,
    pub bins: usize,
    /// Half-opening of the excluded forward cone, in multiples of sigma_p/|p0| (plus one bin).
    pub forward_cone_sigmas: f64,
    /// Shell half-width in multiples of sigma_p.
    pub shell_sigmas: f64,
    pub stationary_grid: GridSpec,
    pub solver: SolverConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            t: 16.0,
            bins: 10,
            forward_cone_sigmas: 2.0,
            shell_sigmas: 2.5,
            stationary_grid: GridSpec::new(12, 0.5, [-2.75; 3]).expect("default grid"),
            solver: SolverConfig::default(),
        }
    }
}

/// Angular distribution of the positive-energy part of F(S psi - psi) on the energy
/// shell, binned in the polar angle from the incident direction, against ||f(w)||^2 of
/// the stationary solution binned over the same momentum samples.
#[allow(clippy::needless_range_loop)]
pub fn compare_dynamic_stationary(
    pkt: &WavePacketSpec,
    ch: &ScatterChannel,
    cfg: &PropagationConfig,
    spec: &PotentialSpec,
    mc: &MassCharge,
    cc: &CompareConfig,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    if cc.bins == 0 {
        return Err(RlsError::Dynamics("comparison needs at least one angular bin".into()));
    }
    let grid = cfg.grid;
    let psi = pkt.build(&grid, mc)?;
    let p = Propagator::new(&grid, spec, mc, cfg.edge_layer)?;
    let (s_psi, _) = s_apply(&p, &psi, cc.t, cfg)?;
    let sp = Spectral3::new(grid);
    let diff = sp.field_to_momentum(&s_psi.sub(&psi));
    let khat = pkt.p0.normalize();
    let p0 = pkt.p0.norm();
    let cone = cc.forward_cone_sigmas * pkt.sigma_p / p0;
    let width = (PI - cone) / cc.bins as f64;
    let theta_edges: Vec<f64> = (1..=cc.bins).map(|j| cone + j as f64 * width).collect();
    // shell samples: (bin, dynamic weight, direction, radial weight)
    let mut samples = Vec::new();
    for idx in 0..grid.len() {
        let q = sp.momentum(idx);
        let qn = q.norm();
        if (qn - p0).abs() > cc.shell_sigmas * pkt.sigma_p || qn == 0.0 {
            continue;
        }
        let th = (q.dot(&khat) / qn).clamp(-1.0, 1.0).acos();
        if th <= cone {
            continue;
        }
        let bin = (((th - cone) / width) as usize).min(cc.bins - 1);
        let e = mc.energy(&q);
        let proj = (Matrix4::identity() + h0(&q, mc) * c(1.0 / e)) * c(0.5);
        let v = proj * Spinor::new(diff[0][idx], diff[1][idx], diff[2][idx], diff[3][idx]);
        let radial = (-(qn - p0).powi(2) / (2.0 * pkt.sigma_p * pkt.sigma_p)).exp();
        samples.push((bin, v.norm_squared(), q / qn, radial));
    }
    let mut dynamic = vec![0.0; cc.bins];
    let mut stationary = vec![0.0; cc.bins];
    if !spec.is_zero() {
        let sol = solve_modified(ch, &cc.stationary_grid, spec, mc, &cc.solver)?;
        let phi = recover_phi(&sol.psi, ch, spec, mc, &cc.solver.quad)?;
        let dirs = DirectionSet { dirs: samples.iter().map(|s| s.2).collect(), weights: vec![0.0; samples.len()] };
        let f = amplitude(&phi, ch, spec, mc, &dirs, AmplitudeForm::FarField)?;
        for (s, d) in samples.iter().zip(&f.directions) {
            dynamic[s.0] += s.1;
            stationary[s.0] += d.strength * s.3;
        }
    }
    let dynamic_total: f64 = dynamic.iter().sum();
    let stationary_total: f64 = stationary.iter().sum();
    let shape_discrepancy = if dynamic_total == 0.0 && stationary_total == 0.0 {
        0.0
    } else {
        let a: Vec<f64> = dynamic.iter().map(|x| x / dynamic_total).collect();
        let b: Vec<f64> = stationary.iter().map(|x| x / stationary_total).collect();
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
    };
    Ok(ComparisonReport {
        theta_edges,
        ratio: if stationary_total > 0.0 { dynamic_total / stationary_total } else { 0.0 },
        dynamic,
        stationary,
        shape_discrepancy,
        forward_cone: cone,
        dynamic_total,
        stationary_total,
        shell_points: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green_kernel::Branch;
    use crate::linalg::expm_hermitian;
    use crate::potential::eval_v;
    use proptest::prelude::*;

    fn mc1() -> MassCharge {
        MassCharge::new(1.0, 1.0).unwrap()
    }

    fn packet() -> WavePacketSpec {
        WavePacketSpec { p0: Vec3::new(0.0, 0.0, 1.2), sigma_p: 0.25, n: 3, r0: Vec3::zeros() }
    }

    fn cfg(n: usize, h: f64) -> PropagationConfig {
        PropagationConfig { grid: GridSpec::centered(n, h).unwrap(), edge_tol: 1e-3, ..Default::default() }
    }

    #[test]
    fn packet_validation() {
        let mut p = packet();
        p.sigma_p = 0.4;
        assert!(p.validate().is_err());
        assert!(packet().build(&GridSpec::centered(16, 2.0).unwrap(), &mc1()).is_err());
        let f = packet().build(&GridSpec::centered(32, 0.8).unwrap(), &mc1()).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_propagation_identity_and_unitarity() {
        let mc = mc1();
        let g = GridSpec::centered(16, 0.6).unwrap();
        let f = SpinorField::from_fn(g, |r| Spinor::new(c((-r.norm_squared()).exp()), I * r.x * (-r.norm_squared()).exp(), c(0.1), c(0.0)));
        assert!(free_propagate(&f, 0.0, &mc).sub(&f).norm() < 1e-13 * f.norm());
        let u = free_propagate(&f, 3.7, &mc);
        assert!((u.norm() - f.norm()).abs() < 1e-12 * f.norm());
        let p = Propagator::new(&g, &PotentialSpec::zero(), &mc, 0.1).unwrap();
        assert!(p.free(&f, 3.7).unwrap().sub(&u).norm() < 1e-12 * f.norm());
    }

    #[test]
    fn single_mode_phase() {
        let mc = mc1();
        let g = GridSpec::centered(8, 0.7).unwrap();
        let sp = Spectral3::new(g);
        let idx = g.index(1, 2, 7);
        let q = sp.momentum(idx);
        for n in 0..4 {
            let data = eigen_h0(&q, &mc, true);
            let gn = data.g[n];
            let f = SpinorField::from_fn(g, |r| gn * Complex64::from_polar(1.0, q.dot(r)));
            let t = 2.3;
            let u = free_propagate(&f, t, &mc);
            let want = f.scaled(Complex64::from_polar(1.0, -t * data.lambda[n]));
            assert!(u.sub(&want).norm() < 1e-12 * f.norm());
        }
    }

    #[test]
    fn group_law() {
        let mc = mc1();
        let g = GridSpec::centered(12, 0.5).unwrap();
        let f = SpinorField::from_fn(g, |r| Spinor::new(c(1.0), c(0.5), I, c(0.0)) * c((-0.5 * r.norm_squared()).exp()));
        let a = free_propagate(&free_propagate(&f, 1.3, &mc), 2.1, &mc);
        let b = free_propagate(&f, 3.4, &mc);
        assert!(a.sub(&b).norm() < 1e-12 * f.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn potential_step_is_the_matrix_exponential(nu in -2.0..2.0f64, a in prop::array::uniform3(-2.0..2.0f64), tau in -0.5..0.5f64) {
            let mut spec = PotentialSpec::zero();
            spec.scalar = crate::potential::Profile::Constant { value: nu };
            spec.vector = a.map(|x| crate::potential::Profile::Constant { value: x });
            let r = Vec3::zeros();
            let want = expm_hermitian(&eval_v(&r, &spec), tau).unwrap();
            let got = potential_step(&spec.coeffs(&r), tau).to_matrix();
            prop_assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_potential_reduces_to_free_evolution() {
        let mc = mc1();
        let c0 = cfg(32, 0.8);
        let psi = packet().build(&c0.grid, &mc).unwrap();
        let full = full_propagate(&psi, 2.0, &c0, &PotentialSpec::zero(), &mc).unwrap();
        assert!(full.sub(&free_propagate(&psi, 2.0, &mc)).norm() < 1e-12);
        assert_eq!(theta(3.0, &psi, &c0, &PotentialSpec::zero(), &mc).unwrap(), psi);
        let spec = PotentialSpec::gaussian(0.05, 1.0, 1.0);
        assert_eq!(theta(0.0, &psi, &c0, &spec, &mc).unwrap(), psi);
        let s = s_operator(&packet(), &c0, &PotentialSpec::zero(), &mc, 4.0).unwrap();
        assert_eq!(s.field, psi);
    }

    #[test]
    fn strang_is_unitary_and_second_order() {
        let mc = mc1();
        let spec = PotentialSpec::gaussian(0.5, 1.0, 1.0);
        let c0 = PropagationConfig { dt: 0.2, edge_tol: 1.0, ..cfg(24, 0.8) };
        let psi = packet().build(&c0.grid, &mc).unwrap();
        let t = 2.0;
        let run = |dt: f64| full_propagate(&psi, t, &PropagationConfig { dt, ..c0 }, &spec, &mc).unwrap();
        let reference = run(0.025);
        let e1 = run(0.2).sub(&reference).norm();
        let e2 = run(0.1).sub(&reference).norm();
        assert!((reference.norm() - 1.0).abs() < 1e-12);
        let ratio = e1 / e2;
        assert!((3.0..5.5).contains(&ratio), "{ratio}");
        let lie = full_propagate(&psi, t, &PropagationConfig { dt: 0.1, order: 1, ..c0 }, &spec, &mc).unwrap();
        assert!(lie.sub(&reference).norm() > e2);
    }

    #[test]
    fn box_escape_is_reported() {
        let mc = mc1();
        let c0 = PropagationConfig { edge_tol: 1e-6, ..cfg(16, 0.8) };
        let pkt = WavePacketSpec { p0: Vec3::new(0.0, 0.0, 1.5), sigma_p: 0.3, n: 3, r0: Vec3::zeros() };
        let psi = pkt.build(&c0.grid, &mc).unwrap();
        let r = full_propagate(&psi, 20.0, &PropagationConfig { dt: 0.1, ..c0 }, &PotentialSpec::gaussian(0.05, 1.0, 1.0), &mc);
        assert!(matches!(r, Err(RlsError::BoxEscape { .. })), "{:?}", r.err());
    }

    #[test]
    fn zero_potential_wave_operator_converges_immediately() {
        let mc = mc1();
        let est = wave_operator_estimate(&packet(), &cfg(24, 0.8), &PotentialSpec::zero(), &mc, &[5.0, 10.0], 1e-3).unwrap();
        assert!(est.converged && est.cauchy_differences.is_empty() && est.norm_ratio == 1.0);
    }

    #[test]
    fn theta_plateaus_after_the_packet_leaves() {
        let mc = mc1();
        let spec = PotentialSpec::gaussian(0.1, 1.0, 1.0);
        let c0 = PropagationConfig { dt: 0.1, grid: GridSpec::new(40, 0.8, [-16.0, -16.0, -8.0]).unwrap(), edge_tol: 1e-2, ..Default::default() };
        let psi = packet().build(&c0.grid, &mc).unwrap();
        let p = Propagator::new(&c0.grid, &spec, &mc, c0.edge_layer).unwrap();
        let d: Vec<f64> = [2.0, 6.0, 12.0].iter().map(|&t| p.theta(t, &psi, &c0).unwrap().0.sub(&psi).norm()).collect();
        assert!(d[1] > d[0], "{d:?}");
        assert!((d[2] - d[1]).abs() < 0.5 * (d[1] - d[0]), "{d:?}");
    }

    #[test]
    fn geometric_ladder_doubles() {
        assert_eq!(geometric_ladder(5.0, 4), vec![5.0, 10.0, 20.0, 40.0]);
    }

    #[test]
    fn comparison_is_zero_without_potential() {
        let mc = mc1();
        let ch = ScatterChannel::new(Vec3::new(0.0, 0.0, 1.2), 3, Branch::Plus, &mc).unwrap();
        let cc = CompareConfig { t: 2.0, ..Default::default() };
        let r = compare_dynamic_stationary(&packet(), &ch, &cfg(16, 0.8), &PotentialSpec::zero(), &mc, &cc).unwrap();
        assert!(r.dynamic.iter().chain(&r.stationary).all(|&x| x == 0.0));
        assert_eq!(r.shape_discrepancy, 0.0);
    }
}
