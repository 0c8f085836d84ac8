//! Uniform cubic grids and 4-spinor fields sampled on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RlsError};
use crate::linalg::{Spinor, Vec3};

/// `n` points per axis with spacing `h`; `origin` is the position of index (0, 0, 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub h: f64,
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(n: usize, h: f64, origin: [f64; 3]) -> Result<Self> {
        if n < 8 {
            return Err(RlsError::Grid(format!("need at least 8 points per axis, got {n}")));
        }
        if !(h > 0.0 && h.is_finite()) || origin.iter().any(|o| !o.is_finite()) {
            return Err(RlsError::Grid(format!("spacing must be positive and finite, got {h}")));
        }
        Ok(Self { n, h, origin })
    }

    /// Grid whose point n/2 (per axis) sits at the coordinate origin.
    pub fn centered(n: usize, h: f64) -> Result<Self> {
        let o = -((n / 2) as f64) * h;
        Self::new(n, h, [o; 3])
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn extent(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        [idx / (self.n * self.n), j, k]
    }

    #[inline]
    pub fn coord(&self, i: [usize; 3]) -> Vec3 {
        Vec3::new(
            self.origin[0] + i[0] as f64 * self.h,
            self.origin[1] + i[1] as f64 * self.h,
            self.origin[2] + i[2] as f64 * self.h,
        )
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Vec3 {
        self.coord(self.unravel(idx))
    }

    pub fn center(&self) -> Vec3 {
        let half = 0.5 * (self.n - 1) as f64 * self.h;
        Vec3::new(self.origin[0] + half, self.origin[1] + half, self.origin[2] + half)
    }

    /// Distance from `r` to the nearest face of the box spanned by the samples.
    pub fn distance_to_boundary(&self, r: &Vec3) -> f64 {
        let hi = (self.n - 1) as f64 * self.h;
        (0..3)
            .map(|a| {
                let t = r[a] - self.origin[a];
                t.min(hi - t)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Index offset between two points of the same grid, if `r` lies on the lattice.
    pub fn lattice_offset(&self, r: &Vec3) -> Option<[i64; 3]> {
        let mut out = [0i64; 3];
        for a in 0..3 {
            let t = r[a] / self.h;
            let rt = t.round();
            if (t - rt).abs() > 1e-9 {
                return None;
            }
            out[a] = rt as i64;
        }
        Some(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub grid: GridSpec,
    pub data: Vec<Spinor>,
}

impl SpinorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![Spinor::zeros(); grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&Vec3) -> Spinor) -> Self {
        let data = (0..grid.len()).map(|idx| f(&grid.point(idx))).collect();
        Self { grid, data }
    }

    pub fn from_vec(grid: GridSpec, data: Vec<Spinor>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(RlsError::Grid(format!("expected {} samples, got {}", grid.len(), data.len())));
        }
        Ok(Self { grid, data })
    }

    /// Discrete L2 norm approximating the integral of |u|^2.
    pub fn norm(&self) -> f64 {
        (self.data.iter().map(|s| s.norm_squared()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// <self, other> = sum h^3 self^* other
    pub fn inner(&self, other: &SpinorField) -> Complex64 {
        let s: Complex64 = self.data.iter().zip(&other.data).map(|(a, b)| a.dotc(b)).sum();
        s * self.grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|s| s.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    pub fn scaled(&self, a: Complex64) -> SpinorField {
        Self { grid: self.grid, data: self.data.iter().map(|s| s * a).collect() }
    }

    pub fn sub(&self, other: &SpinorField) -> SpinorField {
        Self { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &SpinorField) -> SpinorField {
        Self { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flat_map(|s| s.iter()).map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Flattened (point-major, spinor-minor) coefficient vector.
    pub fn to_flat(&self) -> Vec<Complex64> {
        self.data.iter().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn from_flat(grid: GridSpec, v: &[Complex64]) -> Result<Self> {
        if v.len() != 4 * grid.len() {
            return Err(RlsError::Grid(format!("expected {} coefficients, got {}", 4 * grid.len(), v.len())));
        }
        let data = v.chunks_exact(4).map(|c| Spinor::new(c[0], c[1], c[2], c[3])).collect();
        Ok(Self { grid, data })
    }

    /// Split into four scalar component arrays.
    pub fn components(&self) -> [Vec<Complex64>; 4] {
        std::array::from_fn(|a| self.data.iter().map(|s| s[a]).collect())
    }

    pub fn from_components(grid: GridSpec, comps: &[Vec<Complex64>; 4]) -> Self {
        let data = (0..grid.len())
            .map(|i| Spinor::new(comps[0][i], comps[1][i], comps[2][i], comps[3][i]))
            .collect();
        Self { grid, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert!(GridSpec::new(4, 1.0, [0.0; 3]).is_err());
        assert!(GridSpec::new(8, 0.0, [0.0; 3]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = GridSpec::centered(10, 0.5).unwrap();
        for idx in [0, 7, 123, 999] {
            let [i, j, k] = g.unravel(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
        assert_eq!(g.coord([5, 5, 5]), Vec3::zeros());
    }

    #[test]
    fn flat_roundtrip() {
        let g = GridSpec::centered(8, 1.0).unwrap();
        let f = SpinorField::from_fn(g, |r| Spinor::new(r.x.into(), r.y.into(), r.z.into(), Complex64::new(0.0, 1.0)));
        let back = SpinorField::from_flat(g, &f.to_flat()).unwrap();
        assert_eq!(back, f);
        let comps = f.components();
        assert_eq!(SpinorField::from_components(g, &comps), f);
    }
}
