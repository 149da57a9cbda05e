use std::ops::{AddAssign, SubAssign};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fft::{plan, C64};
use super::grid::Grid3;
use crate::error::{Error, Result};

/// Slot of `-k` for every slot `k`.
fn mirror_index(grid: Grid3) -> Vec<usize> {
    let n = grid.n();
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                out.push(grid.index((n - i) % n, (n - j) % n, (n - k) % n));
            }
        }
    }
    out
}

/// Real band-limited scalar field stored as real-space samples.
///
/// The spectral coefficients are available through [`ScalarField3::modes`];
/// samples are real, so the coefficients are Hermitian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField3 {
    pub grid: Grid3,
    pub data: Vec<f64>,
}

impl ScalarField3 {
    pub fn zeros(grid: Grid3) -> Self {
        Self { grid, data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid3, c: f64) -> Self {
        Self { grid, data: vec![c; grid.len()] }
    }

    pub fn from_fn<F>(grid: Grid3, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync,
    {
        let data = (0..grid.len()).into_par_iter().map(|idx| f(grid.point(idx))).collect();
        Self { grid, data }
    }

    pub fn from_data(grid: Grid3, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "sample count {} does not match grid {}",
                data.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, data })
    }

    /// Spectral coefficients `c_k` (normalized, `f = sum c_k e^{2 pi i k.x}`).
    pub fn modes(&self) -> Vec<C64> {
        let mut m: Vec<C64> = self.data.iter().map(|&x| C64::new(x, 0.0)).collect();
        plan(self.grid.n()).forward(&mut m);
        m
    }

    /// Real part of the field synthesized from `modes`.
    pub fn from_modes(grid: Grid3, mut modes: Vec<C64>) -> Self {
        plan(grid.n()).inverse(&mut modes);
        Self { grid, data: modes.into_iter().map(|z| z.re).collect() }
    }

    /// Coefficients of several real fields, packed two per complex transform.
    pub fn modes_batch(fields: &[&ScalarField3]) -> Vec<Vec<C64>> {
        fields
            .par_chunks(2)
            .flat_map_iter(|pair| match pair {
                [a] => vec![a.modes()],
                [a, b] => {
                    let mut z: Vec<C64> = a.data.iter().zip(&b.data).map(|(&x, &y)| C64::new(x, y)).collect();
                    plan(a.grid.n()).forward(&mut z);
                    let neg = mirror_index(a.grid);
                    let (ma, mb) = (0..z.len())
                        .map(|idx| {
                            let (p, q) = (z[idx], z[neg[idx]].conj());
                            ((p + q) * 0.5, (p - q) * C64::new(0.0, -0.5))
                        })
                        .unzip();
                    vec![ma, mb]
                }
                _ => unreachable!(),
            })
            .collect()
    }

    /// Real parts synthesized from several coefficient sets, two per complex transform.
    pub fn from_modes_batch(grid: Grid3, modes: Vec<Vec<C64>>) -> Vec<ScalarField3> {
        let neg = mirror_index(grid);
        // the Hermitian part of each set synthesizes exactly its real part
        let herm = |m: &[C64], idx: usize| (m[idx] + m[neg[idx]].conj()) * 0.5;
        modes
            .par_chunks(2)
            .flat_map_iter(|pair| match pair {
                [a] => vec![ScalarField3::from_modes(grid, a.clone())],
                [a, b] => {
                    let mut z: Vec<C64> =
                        (0..a.len()).map(|idx| herm(a, idx) + C64::new(0.0, 1.0) * herm(b, idx)).collect();
                    plan(grid.n()).inverse(&mut z);
                    let (x, y) = z.into_iter().map(|w| (w.re, w.im)).unzip();
                    vec![Self { grid, data: x }, Self { grid, data: y }]
                }
                _ => unreachable!(),
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>() / self.data.len() as f64
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        Self { grid: self.grid, data: self.data.par_iter().map(|&x| f(x)).collect() }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        self.data.iter_mut().zip(&other.data).for_each(|(x, y)| *x += a * y);
    }

    pub fn add_constant(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x += c);
    }

    /// Pointwise product on the sample grid (collocation, no dealiasing).
    pub fn mul_collocated(&self, other: &Self) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    /// Product evaluated on the 3/2-padded grid and truncated back to the
    /// band `|k_i| < n/2`.
    pub fn mul(&self, other: &Self) -> Self {
        dealiased_product(self, other)
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(self.grid.n(), other.grid.n()));
        }
        Ok(())
    }
}

impl AddAssign<&ScalarField3> for ScalarField3 {
    fn add_assign(&mut self, rhs: &ScalarField3) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&ScalarField3> for ScalarField3 {
    fn sub_assign(&mut self, rhs: &ScalarField3) {
        self.axpy(-1.0, rhs);
    }
}

/// Copy coefficients between grids, keeping modes representable on both and
/// dropping Nyquist rows of the smaller grid.
pub fn resample_modes(from: Grid3, modes: &[C64], to: Grid3) -> Vec<C64> {
    let mut out = vec![C64::default(); to.len()];
    let small = if from.n() < to.n() { from } else { to };
    let h = (small.n() / 2) as i64;
    for (idx, z) in modes.iter().enumerate() {
        let k = from.wavevector(idx);
        if k.iter().all(|&c| c > -h && c < h) {
            if let Some(j) = to.mode_index(k) {
                out[j] = *z;
            }
        }
    }
    out
}

fn dealiased_product(a: &ScalarField3, b: &ScalarField3) -> ScalarField3 {
    let g = a.grid;
    let big = Grid3::new(3 * g.n() / 2 + (3 * g.n() / 2) % 2).expect("padded grid");
    let pa = resample_modes(g, &a.modes(), big);
    let pb = resample_modes(g, &b.modes(), big);
    let fa = ScalarField3::from_modes(big, pa);
    let fb = ScalarField3::from_modes(big, pb);
    let prod = fa.mul_collocated(&fb);
    let back = resample_modes(big, &prod.modes(), g);
    ScalarField3::from_modes(g, back)
}

/// Index of `(j, l)` in the 6-slot symmetric storage `11 12 13 22 23 33`.
#[inline]
pub fn sym_index(j: usize, l: usize) -> usize {
    let (a, b) = if j <= l { (j, l) } else { (l, j) };
    match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        (2, 2) => 5,
        _ => unreachable!("index out of range"),
    }
}

pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Multi-component field made of scalar components on one grid.
pub trait Components: Clone + Send + Sync + Sized {
    const COUNT: usize;
    fn components(&self) -> &[ScalarField3];
    fn components_mut(&mut self) -> &mut [ScalarField3];
    fn from_components(c: Vec<ScalarField3>) -> Self;

    fn grid(&self) -> Grid3 {
        self.components()[0].grid
    }

    fn zeros(grid: Grid3) -> Self {
        Self::from_components((0..Self::COUNT).map(|_| ScalarField3::zeros(grid)).collect())
    }

    fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.components_mut().iter_mut().zip(other.components()) {
            x.axpy(a, y);
        }
    }

    fn scale(&mut self, s: f64) {
        self.components_mut().iter_mut().for_each(|c| c.scale(s));
    }

    fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    fn lincomb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let mut out = x.scaled(a);
        out.axpy(b, y);
        out
    }

    /// Pointwise squared norm weights (off-diagonal tensor slots count twice).
    fn weights() -> Vec<f64> {
        vec![1.0; Self::COUNT]
    }

    /// Sup over points of the pointwise Euclidean (Frobenius) norm.
    fn sup_norm(&self) -> f64 {
        let w = Self::weights();
        let comps = self.components();
        let len = comps[0].data.len();
        (0..len)
            .into_par_iter()
            .map(|i| comps.iter().zip(&w).map(|(c, w)| w * c.data[i] * c.data[i]).sum::<f64>())
            .reduce(|| 0.0, f64::max)
            .sqrt()
    }

    /// Spatial mean of the pointwise squared norm.
    fn mean_square(&self) -> f64 {
        let w = Self::weights();
        self.components().iter().zip(&w).map(|(c, w)| w * c.mean_square()).sum()
    }
}

impl Components for ScalarField3 {
    const COUNT: usize = 1;
    fn components(&self) -> &[ScalarField3] {
        std::slice::from_ref(self)
    }
    fn components_mut(&mut self) -> &mut [ScalarField3] {
        std::slice::from_mut(self)
    }
    fn from_components(mut c: Vec<ScalarField3>) -> Self {
        c.remove(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField3 {
    pub c: [ScalarField3; 3],
}

impl VectorField3 {
    pub fn new(c0: ScalarField3, c1: ScalarField3, c2: ScalarField3) -> Self {
        Self { c: [c0, c1, c2] }
    }

    pub fn from_fn<F>(grid: Grid3, f: F) -> Self
    where
        F: Fn([f64; 3]) -> [f64; 3] + Sync,
    {
        Self {
            c: [
                ScalarField3::from_fn(grid, |x| f(x)[0]),
                ScalarField3::from_fn(grid, |x| f(x)[1]),
                ScalarField3::from_fn(grid, |x| f(x)[2]),
            ],
        }
    }

    pub fn constant(grid: Grid3, v: [f64; 3]) -> Self {
        Self::from_fn(grid, |_| v)
    }

    pub fn at(&self, idx: usize) -> [f64; 3] {
        [self.c[0].data[idx], self.c[1].data[idx], self.c[2].data[idx]]
    }

    pub fn mean(&self) -> [f64; 3] {
        [self.c[0].mean(), self.c[1].mean(), self.c[2].mean()]
    }

    /// Dealiased symmetrized outer product `(v (x) w + w (x) v) / 2`.
    pub fn sym_outer(&self, w: &VectorField3) -> SymTensorField3 {
        let mut out = SymTensorField3::zeros(self.grid());
        for (s, &(j, l)) in SYM_PAIRS.iter().enumerate() {
            let mut a = self.c[j].mul(&w.c[l]);
            if j != l {
                a.axpy(1.0, &self.c[l].mul(&w.c[j]));
                a.scale(0.5);
            }
            out.c[s] = a;
        }
        out
    }

    /// Dealiased `v (x) v`.
    pub fn outer_self(&self) -> SymTensorField3 {
        let mut out = SymTensorField3::zeros(self.grid());
        for (s, &(j, l)) in SYM_PAIRS.iter().enumerate() {
            out.c[s] = self.c[j].mul(&self.c[l]);
        }
        out
    }
}

impl Components for VectorField3 {
    const COUNT: usize = 3;
    fn components(&self) -> &[ScalarField3] {
        &self.c
    }
    fn components_mut(&mut self) -> &mut [ScalarField3] {
        &mut self.c
    }
    fn from_components(c: Vec<ScalarField3>) -> Self {
        let [a, b, d]: [ScalarField3; 3] = c.try_into().expect("3 components");
        Self { c: [a, b, d] }
    }
}

/// Symmetric (2,0)-tensor field with slots `11 12 13 22 23 33`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTensorField3 {
    pub c: [ScalarField3; 6],
}

impl SymTensorField3 {
    pub fn get(&self, j: usize, l: usize) -> &ScalarField3 {
        &self.c[sym_index(j, l)]
    }

    pub fn get_mut(&mut self, j: usize, l: usize) -> &mut ScalarField3 {
        &mut self.c[sym_index(j, l)]
    }

    /// `c * delta^{jl}` as a field.
    pub fn identity(grid: Grid3, c: f64) -> Self {
        let mut t = Self::zeros(grid);
        for j in 0..3 {
            t.get_mut(j, j).add_constant(c);
        }
        t
    }

    pub fn from_fn<F>(grid: Grid3, f: F) -> Self
    where
        F: Fn([f64; 3]) -> [[f64; 3]; 3] + Sync,
    {
        let c = SYM_PAIRS
            .iter()
            .map(|&(j, l)| ScalarField3::from_fn(grid, |x| f(x)[j][l]))
            .collect();
        Self::from_components(c)
    }

    pub fn at(&self, idx: usize) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (s, &(j, l)) in SYM_PAIRS.iter().enumerate() {
            m[j][l] = self.c[s].data[idx];
            m[l][j] = self.c[s].data[idx];
        }
        m
    }

    pub fn mean(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (s, &(j, l)) in SYM_PAIRS.iter().enumerate() {
            let v = self.c[s].mean();
            m[j][l] = v;
            m[l][j] = v;
        }
        m
    }

    pub fn trace(&self) -> ScalarField3 {
        let mut t = self.get(0, 0).clone();
        t += self.get(1, 1);
        t += self.get(2, 2);
        t
    }
}

impl Components for SymTensorField3 {
    const COUNT: usize = 6;
    fn components(&self) -> &[ScalarField3] {
        &self.c
    }
    fn components_mut(&mut self) -> &mut [ScalarField3] {
        &mut self.c
    }
    fn from_components(c: Vec<ScalarField3>) -> Self {
        let arr: [ScalarField3; 6] = c.try_into().expect("6 components");
        Self { c: arr }
    }
    fn weights() -> Vec<f64> {
        vec![1.0, 2.0, 2.0, 1.0, 2.0, 1.0]
    }
}

/// General 3x3 matrix field, row-major slots `m[a][b]` at `3*a + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixField3 {
    pub c: Vec<ScalarField3>,
}

impl MatrixField3 {
    pub fn get(&self, a: usize, b: usize) -> &ScalarField3 {
        &self.c[3 * a + b]
    }

    pub fn get_mut(&mut self, a: usize, b: usize) -> &mut ScalarField3 {
        &mut self.c[3 * a + b]
    }

    pub fn at(&self, idx: usize) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = self.c[3 * a + b].data[idx];
            }
        }
        m
    }

    pub fn identity(grid: Grid3) -> Self {
        let mut m = Self::zeros(grid);
        for a in 0..3 {
            m.get_mut(a, a).add_constant(1.0);
        }
        m
    }

    pub fn from_pointwise<F>(grid: Grid3, f: F) -> Self
    where
        F: Fn(usize) -> [[f64; 3]; 3] + Sync + Send,
    {
        let vals: Vec<[[f64; 3]; 3]> = (0..grid.len()).into_par_iter().map(f).collect();
        let c = (0..9)
            .map(|s| ScalarField3 { grid, data: vals.iter().map(|m| m[s / 3][s % 3]).collect() })
            .collect();
        Self { c }
    }
}

impl Components for MatrixField3 {
    const COUNT: usize = 9;
    fn components(&self) -> &[ScalarField3] {
        &self.c
    }
    fn components_mut(&mut self) -> &mut [ScalarField3] {
        &mut self.c
    }
    fn from_components(c: Vec<ScalarField3>) -> Self {
        assert_eq!(c.len(), 9);
        Self { c }
    }
}

/// Uniformly time-sampled sequence of fields on a shared grid.
#[derive(Clone, Debug)]
pub struct TimeSampled<T> {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<T>,
}

impl<T: Components> TimeSampled<T> {
    pub fn new(t0: f64, dt: f64, samples: Vec<T>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 time samples".into()));
        }
        if dt <= 0.0 {
            return Err(Error::InvalidArgument("time step must be positive".into()));
        }
        let g = samples[0].grid();
        if let Some(s) = samples.iter().find(|s| s.grid() != g) {
            return Err(Error::GridMismatch(g.n(), s.grid().n()));
        }
        Ok(Self { t0, dt, samples })
    }

    pub fn from_fn<F: Fn(f64) -> T>(t0: f64, dt: f64, count: usize, f: F) -> Result<Self> {
        Self::new(t0, dt, (0..count).map(|i| f(t0 + i as f64 * dt)).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> Grid3 {
        self.samples[0].grid()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|i| self.time(i)).collect()
    }

    /// Linear interpolation in time; errors outside the sampled range.
    pub fn at_time(&self, t: f64) -> Result<T> {
        let tol = 1e-9 * self.dt;
        if t < self.t0 - tol || t > self.t_end() + tol {
            return Err(Error::WindowOutOfRange { lo: t, hi: t, min: self.t0, max: self.t_end() });
        }
        let s = ((t - self.t0) / self.dt).clamp(0.0, (self.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.len() - 2);
        let w = s - i as f64;
        if w.abs() < 1e-12 {
            return Ok(self.samples[i].clone());
        }
        if (1.0 - w).abs() < 1e-12 {
            return Ok(self.samples[i + 1].clone());
        }
        Ok(T::lincomb(1.0 - w, &self.samples[i], w, &self.samples[i + 1]))
    }

    /// Four-point Lagrange interpolation in time (linear with two samples).
    pub fn interp(&self, t: f64) -> Result<T> {
        if self.len() < 4 {
            return self.at_time(t);
        }
        let tol = 1e-9 * self.dt;
        if t < self.t0 - tol || t > self.t_end() + tol {
            return Err(Error::WindowOutOfRange { lo: t, hi: t, min: self.t0, max: self.t_end() });
        }
        let s = ((t - self.t0) / self.dt).clamp(0.0, (self.len() - 1) as f64);
        let r = s.round();
        if (s - r).abs() < 1e-12 {
            return Ok(self.samples[r as usize].clone());
        }
        let i = (s.floor() as usize).min(self.len() - 2);
        let base = i.saturating_sub(1).min(self.len() - 4);
        let mut out = T::zeros(self.grid());
        for a in 0..4 {
            let xa = (base + a) as f64;
            let w: f64 = (0..4).filter(|&b| b != a).map(|b| (s - (base + b) as f64) / (xa - (base + b) as f64)).product();
            out.axpy(w, &self.samples[base + a]);
        }
        Ok(out)
    }

    /// Sample index for time `t`, if `t` sits on the sampling lattice.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let s = (t - self.t0) / self.dt;
        let i = s.round();
        if (s - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < self.len() {
            Some(i as usize)
        } else {
            None
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.sup_norm()).fold(0.0, f64::max)
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.sup_norm()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g(n: usize) -> Grid3 {
        Grid3::new(n).unwrap()
    }

    #[test]
    fn paired_transforms_match_single() {
        let fs: Vec<ScalarField3> = (0..3)
            .map(|s| ScalarField3::from_fn(g(8), move |x| ((s + 1) as f64 * 2.0 * PI * x[0]).cos() + (2.0 * PI * (x[1] + s as f64 * x[2])).sin()))
            .collect();
        let refs: Vec<&ScalarField3> = fs.iter().collect();
        let batch = ScalarField3::modes_batch(&refs);
        for (m, f) in batch.iter().zip(&fs) {
            assert!(m.iter().zip(f.modes()).all(|(a, b)| (a - b).norm() < 1e-14));
        }
        // a non-Hermitian set keeps only its real part
        let mut skew = batch.clone();
        skew[1][1] += C64::new(0.0, 0.25);
        let back = ScalarField3::from_modes_batch(g(8), skew.clone());
        for (f, m) in back.iter().zip(skew) {
            let want = ScalarField3::from_modes(g(8), m);
            assert!(f.data.iter().zip(&want.data).all(|(a, b)| (a - b).abs() < 1e-13));
        }
    }

    #[test]
    fn modes_roundtrip() {
        let f = ScalarField3::from_fn(g(8), |x| (2.0 * PI * x[0]).cos() + 0.5 * (2.0 * PI * (x[1] - x[2])).sin());
        let back = ScalarField3::from_modes(f.grid, f.modes());
        for (a, b) in f.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn dealiased_product_exact_below_band() {
        let grid = g(16);
        let a = ScalarField3::from_fn(grid, |x| (2.0 * PI * 3.0 * x[0]).cos());
        let b = ScalarField3::from_fn(grid, |x| (2.0 * PI * 2.0 * x[0]).sin());
        let p = a.mul(&b);
        let want = ScalarField3::from_fn(grid, |x| 0.5 * ((2.0 * PI * 5.0 * x[0]).sin() - (2.0 * PI * x[0]).sin()));
        for (x, y) in p.data.iter().zip(&want.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dealiased_product_drops_out_of_band() {
        let grid = g(8);
        let a = ScalarField3::from_fn(grid, |x| (2.0 * PI * 3.0 * x[0]).cos());
        let p = a.mul(&a);
        // cos^2 = 1/2 + cos(6 pi x)/2, frequency 6 is out of band on n = 8
        for x in &p.data {
            assert!((x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sym_index_is_symmetric() {
        for j in 0..3 {
            for l in 0..3 {
                assert_eq!(sym_index(j, l), sym_index(l, j));
                assert_eq!(SYM_PAIRS[sym_index(j, l)], (j.min(l), j.max(l)));
            }
        }
    }

    #[test]
    fn tensor_sup_norm_counts_off_diagonals_twice() {
        let grid = g(8);
        let mut t = SymTensorField3::zeros(grid);
        t.get_mut(0, 1).add_constant(1.0);
        assert!((t.sup_norm() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn time_interpolation() {
        let grid = g(8);
        let ts = TimeSampled::from_fn(0.0, 0.5, 3, |t| ScalarField3::constant(grid, t)).unwrap();
        assert!((ts.at_time(0.75).unwrap().data[0] - 0.75).abs() < 1e-15);
        assert!(ts.at_time(1.5).is_err());
        assert_eq!(ts.index_of(1.0), Some(2));
    }
}
