//! Potentials V(r) = -e nu(r) I + e alpha.A(r), their factorization
//! V = V1 W1 V1 and integrability/decay diagnostics.

use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirac_algebra::alpha_matrices;
use crate::error::{Result, RlsError};
use crate::fourier::Convolver;
use crate::green_kernel::{DiracCoeffs, QuadratureSpec};
use crate::grid::GridSpec;
use crate::linalg::{c, hermitian_eigen, Matrix4, Spinor, Vec3};
use crate::quadrature::LATTICE_ZETA_2;

/// A real radial profile, or a column of the attached table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    #[default]
    Zero,
    /// g e^{-a |r|^2}
    Gaussian { g: f64, a: f64 },
    /// g e^{-a |r|} / (|r| + eps0)
    SmoothedYukawa { g: f64, a: f64, eps0: f64 },
    Constant { value: f64 },
    /// Trilinear interpolation of the attached [`PotentialTable`].
    Table,
}

impl Profile {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Profile::Zero | Profile::Table => true,
            Profile::Gaussian { g, a } => g.is_finite() && a > 0.0 && a.is_finite(),
            Profile::SmoothedYukawa { g, a, eps0 } => g.is_finite() && a >= 0.0 && eps0 > 0.0,
            Profile::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(RlsError::Potential(format!("invalid profile parameters {self:?}")))
        }
    }

    fn eval(&self, r: &Vec3, table: Option<&PotentialTable>, column: usize) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian { g, a } => g * (-a * r.norm_squared()).exp(),
            Profile::SmoothedYukawa { g, a, eps0 } => {
                let rr = r.norm();
                g * (-a * rr).exp() / (rr + eps0)
            }
            Profile::Constant { value } => value,
            Profile::Table => table.map_or(0.0, |t| t.sample(r)[column]),
        }
    }
}

/// Samples (nu, A1, A2, A3) on a regular grid; zero outside the sampled box.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTable {
    pub grid: GridSpec,
    pub values: Vec<[f64; 4]>,
}

impl PotentialTable {
    pub fn from_fn(grid: GridSpec, f: impl Fn(&Vec3) -> [f64; 4] + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect();
        Self { grid, values }
    }

    /// Reads rows r1,r2,r3,nu,A1,A2,A3 (a header line is skipped if present). The
    /// rows must cover a full cubic lattice.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<[f64; 7]> = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = t.split(',').map(|s| s.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 7 => rows.push([v[0], v[1], v[2], v[3], v[4], v[5], v[6]]),
                Ok(v) => return Err(RlsError::Potential(format!("table line {}: expected 7 columns, got {}", ln + 1, v.len()))),
                Err(_) if rows.is_empty() && ln == 0 => continue,
                Err(e) => return Err(RlsError::Potential(format!("table line {}: {e}", ln + 1))),
            }
        }
        let axis = |k: usize| -> Vec<f64> {
            let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            v
        };
        let ax = axis(0);
        let n = ax.len();
        if n < 8 || axis(1).len() != n || axis(2).len() != n || rows.len() != n * n * n {
            return Err(RlsError::Potential("table rows do not form a full cubic lattice with at least 8 points per axis".into()));
        }
        let h = (ax[n - 1] - ax[0]) / (n - 1) as f64;
        let origin = [ax[0], axis(1)[0], axis(2)[0]];
        let grid = GridSpec::new(n, h, origin)?;
        let mut values = vec![[f64::NAN; 4]; grid.len()];
        for r in &rows {
            let idx: Vec<usize> = (0..3).map(|a| ((r[a] - origin[a]) / h).round() as usize).collect();
            values[grid.index(idx[0], idx[1], idx[2])] = [r[3], r[4], r[5], r[6]];
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(RlsError::Potential("table has missing or non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv(std::io::BufReader::new(f))
    }

    pub fn sample(&self, r: &Vec3) -> [f64; 4] {
        let g = &self.grid;
        let mut i0 = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let x = (r[a] - g.origin[a]) / g.h;
            if !(x >= 0.0 && x <= (g.n - 1) as f64) {
                return [0.0; 4];
            }
            let fl = x.floor().min((g.n - 2) as f64);
            i0[a] = fl as usize;
            t[a] = x - fl;
        }
        let mut out = [0.0; 4];
        for corner in 0..8 {
            let b = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
            let w: f64 = (0..3).map(|a| if b[a] == 1 { t[a] } else { 1.0 - t[a] }).product();
            if w == 0.0 {
                continue;
            }
            let v = &self.values[g.index(i0[0] + b[0], i0[1] + b[1], i0[2] + b[2])];
            for k in 0..4 {
                out[k] += w * v[k];
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub scalar: Profile,
    #[serde(default)]
    pub vector: [Profile; 3],
    pub charge: f64,
    #[serde(skip)]
    pub table: Option<Arc<PotentialTable>>,
}

impl PartialEq for PotentialSpec {
    fn eq(&self, o: &Self) -> bool {
        self.scalar == o.scalar && self.vector == o.vector && self.charge == o.charge && self.table == o.table
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self { scalar: Profile::Zero, vector: [Profile::Zero; 3], charge: 1.0, table: None }
    }

    /// Scalar Gaussian nu = g e^{-a r^2}, no vector part.
    pub fn gaussian(g: f64, a: f64, charge: f64) -> Self {
        Self { scalar: Profile::Gaussian { g, a }, ..Self::zero() }.with_charge(charge)
    }

    pub fn with_charge(mut self, charge: f64) -> Self {
        self.charge = charge;
        self
    }

    pub fn with_table(mut self, table: PotentialTable) -> Self {
        self.table = Some(Arc::new(table));
        self
    }

    /// Scales nu and A (not the charge) by `s`; table columns are scaled as well.
    pub fn scaled(&self, s: f64) -> Self {
        let sc = |p: &Profile| match *p {
            Profile::Gaussian { g, a } => Profile::Gaussian { g: g * s, a },
            Profile::SmoothedYukawa { g, a, eps0 } => Profile::SmoothedYukawa { g: g * s, a, eps0 },
            Profile::Constant { value } => Profile::Constant { value: value * s },
            other => other,
        };
        let table = self.table.as_ref().map(|t| {
            Arc::new(PotentialTable { grid: t.grid, values: t.values.iter().map(|v| v.map(|x| x * s)).collect() })
        });
        Self { scalar: sc(&self.scalar), vector: [sc(&self.vector[0]), sc(&self.vector[1]), sc(&self.vector[2])], charge: self.charge, table }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.charge.is_finite() {
            return Err(RlsError::Potential("charge must be finite".into()));
        }
        self.scalar.validate()?;
        for p in &self.vector {
            p.validate()?;
        }
        let uses_table = self.scalar == Profile::Table || self.vector.contains(&Profile::Table);
        if uses_table && self.table.is_none() {
            return Err(RlsError::Potential("a table profile is used but no table is attached".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.charge == 0.0 || (self.scalar == Profile::Zero && self.vector.iter().all(|p| *p == Profile::Zero))
    }

    /// (nu, A1, A2, A3) at r.
    pub fn profiles(&self, r: &Vec3) -> [f64; 4] {
        let t = self.table.as_deref();
        [self.scalar.eval(r, t, 0), self.vector[0].eval(r, t, 1), self.vector[1].eval(r, t, 2), self.vector[2].eval(r, t, 3)]
    }

    /// V(r) as coefficients on {I, beta, alpha}: id = -e nu, alpha_k = e A_k.
    pub fn coeffs(&self, r: &Vec3) -> DiracCoeffs {
        let [nu, a1, a2, a3] = self.profiles(r);
        let e = self.charge;
        DiracCoeffs { id: c(-e * nu), beta: c(0.0), alpha: [c(e * a1), c(e * a2), c(e * a3)] }
    }

    /// Spectral norm of V(r), which is |e| (|nu| + |A|).
    pub fn norm_at(&self, r: &Vec3) -> f64 {
        let [nu, a1, a2, a3] = self.profiles(r);
        self.charge.abs() * (nu.abs() + (a1 * a1 + a2 * a2 + a3 * a3).sqrt())
    }

    /// Checks that V is finite on every grid point and returns its maximum norm.
    pub fn sup_norm_on(&self, grid: &GridSpec) -> Result<f64> {
        let m = (0..grid.len()).into_par_iter().map(|i| self.norm_at(&grid.point(i))).reduce(|| 0.0, |a: f64, b: f64| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) });
        if !m.is_finite() {
            return Err(RlsError::Potential("potential is not finite on the grid".into()));
        }
        Ok(m)
    }
}

/// V(r) = -e nu(r) I + e sum_k A_k(r) alpha_k.
pub fn eval_v(r: &Vec3, spec: &PotentialSpec) -> Matrix4 {
    spec.coeffs(r).to_matrix()
}

/// V = V1 W1 V1 with V1 = |V|^{1/2} and W1 = sign(V), sign(0) = +1.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    pub v1: Matrix4,
    pub w1: Matrix4,
}

/// Eigenvalues below this fraction of the largest |eigenvalue| are treated as zero.
const ZERO_EIGEN: f64 = 1e-14;

pub fn factorize_v(v: &Matrix4) -> Result<FactorPair> {
    let (vals, u) = hermitian_eigen(v)?;
    let scale = vals.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let d1 = Spinor::from_fn(|k, _| c(vals[k].abs().sqrt()));
    let sg = Spinor::from_fn(|k, _| c(if vals[k] < -ZERO_EIGEN * scale { -1.0 } else { 1.0 }));
    let ua = u.adjoint();
    Ok(FactorPair { v1: u * Matrix4::from_diagonal(&d1) * ua, w1: u * Matrix4::from_diagonal(&sg) * ua })
}

/// Factors of V = -e nu I + e A.alpha in closed form: with n = A/|A| the
/// projectors P = (I +- n.alpha)/2 carry the eigenvalues e(-nu +- |A|).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FactorCoeffs {
    pub v1: DiracCoeffs,
    pub w1: DiracCoeffs,
}

pub fn factorize_coeffs(v: &DiracCoeffs) -> FactorCoeffs {
    let s = v.id.re;
    let a = [v.alpha[0].re, v.alpha[1].re, v.alpha[2].re];
    let an = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let scale = s.abs() + an;
    let sign = |d: f64| if d < -ZERO_EIGEN * scale { -1.0 } else { 1.0 };
    if an <= ZERO_EIGEN * scale || an == 0.0 {
        return FactorCoeffs {
            v1: DiracCoeffs { id: c(s.abs().sqrt()), ..Default::default() },
            w1: DiracCoeffs { id: c(sign(s)), ..Default::default() },
        };
    }
    let (dp, dm) = (s + an, s - an);
    let build = |fp: f64, fm: f64| DiracCoeffs {
        id: c(0.5 * (fp + fm)),
        beta: c(0.0),
        alpha: a.map(|x| c(0.5 * (fp - fm) * x / an)),
    };
    FactorCoeffs { v1: build(dp.abs().sqrt(), dm.abs().sqrt()), w1: build(sign(dp), sign(dm)) }
}

/// Samples of the factors of V on every grid point.
pub fn factorize_on_grid(spec: &PotentialSpec, grid: &GridSpec) -> Vec<FactorCoeffs> {
    (0..grid.len()).into_par_iter().map(|i| factorize_coeffs(&spec.coeffs(&grid.point(i)))).collect()
}

/// Rolnik double integral on one lattice.
fn rolnik_level(spec: &PotentialSpec, extent: f64, n: usize) -> f64 {
    let g = GridSpec::centered(n, extent / n as f64).expect("valid rolnik lattice");
    let h = g.h;
    let w: Vec<Complex64> = (0..g.len()).into_par_iter().map(|i| c(spec.norm_at(&g.point(i)))).collect();
    let kn = n - 1;
    let conv = Convolver::new(kn, n);
    let mut k = conv.buffer();
    let kni = kn as i64;
    for i in -kni..=kni {
        for j in -kni..=kni {
            for l in -kni..=kni {
                let n2 = (i * i + j * j + l * l) as f64;
                let v = if n2 == 0.0 { -LATTICE_ZETA_2 } else { 1.0 / n2 };
                k[conv.kernel_slot([i, j, l])] = c(v / (h * h));
            }
        }
    }
    conv.fft().forward(&mut k);
    let src = conv.source_transform(&w);
    let prod: Vec<Complex64> = k.iter().zip(&src).map(|(a, b)| a * b).collect();
    let out = conv.extract(prod, 0, n);
    let s: f64 = out.iter().zip(&w).map(|(o, x)| (o * x).re).sum();
    s * h.powi(6)
}

#[derive(Clone, Debug, Serialize)]
pub struct RolnikReport {
    pub estimate: f64,
    /// (spacing, estimate) from coarse to fine.
    pub sequence: Vec<(f64, f64)>,
    /// Relative change at the final refinement.
    pub final_change: f64,
    /// Set when the estimate keeps growing by more than 5% per refinement.
    pub diverging: bool,
}

/// Estimate of the double integral of |V(r)| |V(s)| / |r - s|^2 over the cube of
/// side `quad.extent`, on lattices with points/4, points/2 and points per axis.
pub fn rolnik_norm(spec: &PotentialSpec, quad: &QuadratureSpec) -> Result<RolnikReport> {
    spec.validate()?;
    let (extent, points) = (quad.extent, quad.points);
    if points < 32 || !(extent > 0.0) {
        return Err(RlsError::Potential("rolnik estimate needs extent > 0 and at least 32 points".into()));
    }
    let levels = [points / 4, points / 2, points];
    let sequence: Vec<(f64, f64)> = levels.iter().map(|&n| (extent / n as f64, rolnik_level(spec, extent, n))).collect();
    let est = sequence[2].1;
    let rel = |a: f64, b: f64| if b == 0.0 { 0.0 } else { (b - a).abs() / b.abs() };
    let final_change = rel(sequence[1].1, est);
    let diverging = sequence[1].1 > 1.05 * sequence[0].1 && est > 1.05 * sequence[1].1;
    Ok(RolnikReport { estimate: est, sequence, final_change, diverging })
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegralConvergence {
    pub epsilon: f64,
    /// (T, 2 int_0^T [int_{|r| > t eps} |V|^2 dr]^{1/2} dt) on the t-ladder.
    pub partial_sums: Vec<(f64, f64)>,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerLawFit {
    pub alpha_hat: f64,
    pub m_hat: f64,
    /// Fitted range of |r|.
    pub r_range: (f64, f64),
    /// alpha_hat > 3.
    pub satisfied: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub rolnik_estimate: f64,
    pub l1_norm_estimate: f64,
    pub sup_norm: f64,
    pub integral_decay: IntegralConvergence,
    pub power_law: PowerLawFit,
}

/// Decay diagnostics on the centered lattice with `quad.points` per axis and side `quad.extent`.
pub fn decay_check(spec: &PotentialSpec, quad: &QuadratureSpec) -> Result<DecayReport> {
    let rolnik = rolnik_norm(spec, quad)?;
    let (extent, points) = (quad.extent, quad.points);
    let g = GridSpec::centered(points, extent / points as f64)?;
    let h3 = g.cell_volume();
    let mut samples: Vec<(f64, f64)> = (0..g.len()).into_par_iter().map(|i| {
        let p = g.point(i);
        (p.norm(), spec.norm_at(&p))
    }).collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let l1 = samples.iter().map(|s| s.1).sum::<f64>() * h3;
    let sup = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let r_max = 0.5 * extent;

    // tail integrals of |V|^2 over |r| > R via a suffix sum over sorted radii
    let mut suffix = vec![0.0; samples.len() + 1];
    for i in (0..samples.len()).rev() {
        suffix[i] = suffix[i + 1] + samples[i].1 * samples[i].1 * h3;
    }
    let tail = |rr: f64| -> f64 {
        let k = samples.partition_point(|s| s.0 <= rr);
        suffix[k].sqrt()
    };
    let eps = 1.0;
    let n_t = 400;
    let t_end = r_max / eps;
    let dt = t_end / n_t as f64;
    let mut partial = Vec::new();
    let mut acc = 0.0;
    let mut prev = tail(0.0);
    let mut next_report = t_end / 64.0;
    for k in 1..=n_t {
        let t = k as f64 * dt;
        let cur = tail(t * eps);
        acc += dt * (prev + cur);
        prev = cur;
        if t >= next_report * (1.0 - 1e-12) {
            partial.push((t, acc));
            next_report *= 2.0;
        }
    }
    let incs: Vec<f64> = partial.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let converged = acc > 0.0 && incs.len() >= 2 && {
        let last = incs[incs.len() - 1];
        let before = incs[incs.len() - 2];
        last <= 0.7 * before.max(1e-300) && last <= 0.05 * acc
    } || acc == 0.0;

    // power-law fit of the shell maxima of |V| on [r_max/8, 0.9 r_max]
    let (lo, hi) = (r_max / 8.0, 0.9 * r_max);
    let nb = 12;
    let mut pts = Vec::new();
    let mut superpoly = false;
    for b in 0..nb {
        let a0 = lo * (hi / lo).powf(b as f64 / nb as f64);
        let a1 = lo * (hi / lo).powf((b + 1) as f64 / nb as f64);
        let i0 = samples.partition_point(|s| s.0 < a0);
        let i1 = samples.partition_point(|s| s.0 < a1);
        let shell = &samples[i0..i1];
        let Some(vmax) = shell.iter().map(|s| s.1).max_by(f64::total_cmp) else { continue };
        if vmax <= 0.0 {
            superpoly = true;
            continue;
        }
        pts.push(((a0 * a1).sqrt().ln(), vmax.ln()));
    }
    let (alpha_hat, m_hat) = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (-slope, (my - slope * mx).exp())
    } else if superpoly || sup == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (f64::NAN, f64::NAN)
    };
    let alpha_hat = if superpoly && pts.len() < nb / 2 { f64::INFINITY } else { alpha_hat };
    Ok(DecayReport {
        rolnik_estimate: rolnik.estimate,
        l1_norm_estimate: l1,
        sup_norm: sup,
        integral_decay: IntegralConvergence { epsilon: eps, partial_sums: partial, converged },
        power_law: PowerLawFit { alpha_hat, m_hat, r_range: (lo, hi), satisfied: alpha_hat > 3.0 },
    })
}

/// Matrix form of the alpha-part used in tests and diagnostics.
pub fn alpha_part(a: [f64; 3]) -> Matrix4 {
    let al = alpha_matrices();
    al[0] * c(a[0]) + al[1] * c(a[1]) + al[2] * c(a[2])
}
