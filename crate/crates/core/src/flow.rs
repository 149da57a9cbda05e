//! Coarse-scale flow maps, back-to-labels charts, phase functions and the
//! transport solvers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::fft::C64;
use crate::spectral::field::{Components, MatrixField3, ScalarField3, SymTensorField3, TimeSampled, VectorField3};
use crate::spectral::grid::Grid3;
use crate::spectral::ops::{antidiv_r, grads, jacobian};

/// Coefficients below `ACTIVE_TOL * max |c|` are dropped from trig sums.
pub const ACTIVE_TOL: f64 = 1e-15;

/// Real trigonometric polynomial restricted to its active modes, evaluated
/// exactly at arbitrary points.
#[derive(Clone, Debug)]
pub struct TrigSeries {
    ncomp: usize,
    ks: Vec<[i64; 3]>,
    /// `weight * c_k`, component-major within each mode.
    coeffs: Vec<C64>,
    kmin: [i64; 3],
    kmax: [i64; 3],
}

impl TrigSeries {
    pub fn new<T: Components>(f: &T) -> Self {
        let comps = f.components();
        let grid = comps[0].grid;
        let n = grid.n();
        let modes: Vec<Vec<C64>> = comps.iter().map(|c| c.modes()).collect();
        let peak = modes.iter().flat_map(|m| m.iter().map(|z| z.norm())).fold(0.0, f64::max);
        let cut = ACTIVE_TOL * peak;
        let mut ks = Vec::new();
        let mut coeffs = Vec::new();
        let (mut kmin, mut kmax) = ([0i64; 3], [0i64; 3]);
        for idx in 0..grid.len() {
            let [i, j, k] = grid.unflatten(idx);
            let neg = grid.index((n - i) % n, (n - j) % n, (n - k) % n);
            let w = match idx.cmp(&neg) {
                std::cmp::Ordering::Less => 2.0,
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Greater => continue,
            };
            if modes.iter().all(|m| m[idx].norm() <= cut) {
                continue;
            }
            let kv = grid.wavevector(idx);
            for a in 0..3 {
                kmin[a] = kmin[a].min(kv[a]);
                kmax[a] = kmax[a].max(kv[a]);
            }
            ks.push(kv);
            coeffs.extend(modes.iter().map(|m| m[idx] * w));
        }
        Self { ncomp: comps.len(), ks, coeffs, kmin, kmax }
    }

    pub fn active_modes(&self) -> usize {
        self.ks.len()
    }

    pub fn eval(&self, x: [f64; 3], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let tables: [Vec<C64>; 3] = std::array::from_fn(|a| {
            let len = (self.kmax[a] - self.kmin[a] + 1) as usize;
            let step = C64::from_polar(1.0, 2.0 * PI * x[a]);
            let mut z = C64::from_polar(1.0, 2.0 * PI * x[a] * self.kmin[a] as f64);
            (0..len)
                .map(|_| {
                    let cur = z;
                    z *= step;
                    cur
                })
                .collect()
        });
        for (m, k) in self.ks.iter().enumerate() {
            let e = tables[0][(k[0] - self.kmin[0]) as usize]
                * tables[1][(k[1] - self.kmin[1]) as usize]
                * tables[2][(k[2] - self.kmin[2]) as usize];
            let c = &self.coeffs[m * self.ncomp..(m + 1) * self.ncomp];
            for (o, z) in out.iter_mut().zip(c) {
                *o += z.re * e.re - z.im * e.im;
            }
        }
    }

    /// Evaluate at many points; returns one sample vector per component.
    pub fn eval_points(&self, pts: &[[f64; 3]]) -> Vec<Vec<f64>> {
        let vals: Vec<Vec<f64>> = pts
            .par_iter()
            .map(|&x| {
                let mut o = vec![0.0; self.ncomp];
                self.eval(x, &mut o);
                o
            })
            .collect();
        (0..self.ncomp).map(|c| vals.iter().map(|v| v[c]).collect()).collect()
    }

    /// Evaluate at one point per grid node, returning a field of type `T`.
    pub fn eval_field<T: Components>(&self, grid: Grid3, pts: &[[f64; 3]]) -> T {
        let data = self.eval_points(pts);
        T::from_components(data.into_iter().map(|d| ScalarField3 { grid, data: d }).collect())
    }
}

/// Velocity evaluator with per-time caching of the trig series.
struct VelocityClock<'a> {
    v: &'a TimeSampled<VectorField3>,
    cache: HashMap<u64, (VectorField3, TrigSeries)>,
}

impl<'a> VelocityClock<'a> {
    fn new(v: &'a TimeSampled<VectorField3>) -> Self {
        Self { v, cache: HashMap::new() }
    }

    fn entry(&mut self, t: f64) -> Result<&(VectorField3, TrigSeries)> {
        let key = t.to_bits();
        if !self.cache.contains_key(&key) {
            if self.cache.len() > 8 {
                self.cache.clear();
            }
            let f = self.v.interp(t)?;
            let s = TrigSeries::new(&f);
            self.cache.insert(key, (f, s));
        }
        Ok(&self.cache[&key])
    }

    fn at_points(&mut self, t: f64, pts: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
        let (_, s) = self.entry(t)?;
        let vals = s.eval_points(pts);
        Ok((0..pts.len()).map(|i| [vals[0][i], vals[1][i], vals[2][i]]).collect())
    }

    fn on_grid(&mut self, t: f64) -> Result<Vec<[f64; 3]>> {
        let (f, _) = self.entry(t)?;
        Ok((0..f.c[0].data.len()).map(|i| f.at(i)).collect())
    }
}

fn check_range<T: Components>(f: &TimeSampled<T>, a: f64, b: f64) -> Result<()> {
    let (lo, hi) = (a.min(b), a.max(b));
    let tol = 1e-9 * f.dt;
    if lo < f.t0 - tol || hi > f.t_end() + tol {
        return Err(Error::WindowOutOfRange { lo, hi, min: f.t0, max: f.t_end() });
    }
    Ok(())
}

fn rk4_points(clock: &mut VelocityClock, t: f64, h: f64, pts: &[[f64; 3]], k1: Option<Vec<[f64; 3]>>) -> Result<Vec<[f64; 3]>> {
    let shift = |p: &[[f64; 3]], k: &[[f64; 3]], c: f64| -> Vec<[f64; 3]> {
        p.iter().zip(k).map(|(x, v)| [x[0] + c * v[0], x[1] + c * v[1], x[2] + c * v[2]]).collect()
    };
    let k1 = match k1 {
        Some(k) => k,
        None => clock.at_points(t, pts)?,
    };
    let k2 = clock.at_points(t + 0.5 * h, &shift(pts, &k1, 0.5 * h))?;
    let k3 = clock.at_points(t + 0.5 * h, &shift(pts, &k2, 0.5 * h))?;
    let k4 = clock.at_points(t + h, &shift(pts, &k3, h))?;
    Ok((0..pts.len())
        .map(|i| std::array::from_fn(|a| pts[i][a] + h / 6.0 * (k1[i][a] + 2.0 * k2[i][a] + 2.0 * k3[i][a] + k4[i][a])))
        .collect())
}

/// Positions `Phi_s(t0, x)` of the flow of `d_t + v . grad` for each `s`.
///
/// Positions are not wrapped back into the unit cell.
pub fn integrate_flow(v: &TimeSampled<VectorField3>, t0: f64, starts: &[[f64; 3]], s_values: &[f64]) -> Result<Vec<Vec<[f64; 3]>>> {
    let mut clock = VelocityClock::new(v);
    let mut out = Vec::with_capacity(s_values.len());
    for &s in s_values {
        check_range(v, t0, t0 + s)?;
        let steps = ((s.abs() / (0.5 * v.dt)).ceil() as usize).max(1);
        let h = s / steps as f64;
        let mut pts = starts.to_vec();
        for k in 0..steps {
            pts = rk4_points(&mut clock, t0 + k as f64 * h, h, &pts, None)?;
        }
        out.push(pts);
    }
    Ok(out)
}

/// Foot of the characteristic through each grid point: solve `X' = v(s, X)`
/// from `s = t1` back to `s = t0` starting at the grid nodes.
fn grid_feet(clock: &mut VelocityClock, grid: Grid3, t1: f64, t0: f64, substeps: usize) -> Result<Vec<[f64; 3]>> {
    let h = (t0 - t1) / substeps as f64;
    let mut pts: Vec<[f64; 3]> = (0..grid.len()).map(|i| grid.point(i)).collect();
    for k in 0..substeps {
        let t = t1 + k as f64 * h;
        let k1 = if k == 0 { Some(clock.on_grid(t)?) } else { None };
        pts = rk4_points(clock, t, h, &pts, k1)?;
    }
    Ok(pts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Scheme {
    /// Backward characteristics with exact trigonometric evaluation at the feet.
    #[default]
    SemiLagrangian,
    /// Method of lines: pseudo-spectral advection with classical RK4.
    Eulerian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportOptions {
    pub scheme: Scheme,
    /// RK4 substeps per output step for the characteristic feet.
    pub substeps: usize,
    /// Target advective CFL number `|v| h n pi` for the Eulerian scheme.
    pub cfl: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self { scheme: Scheme::SemiLagrangian, substeps: 1, cfl: 1.0 }
    }
}

/// Time-dependent forcing evaluated on demand.
pub trait Forcing<T>: Sync {
    fn at(&self, t: f64) -> Result<T>;
    /// Time range on which the forcing is defined.
    fn range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

impl<T: Components> Forcing<T> for TimeSampled<T> {
    fn at(&self, t: f64) -> Result<T> {
        self.interp(t)
    }
    fn range(&self) -> (f64, f64) {
        (self.t0, self.t_end())
    }
}

/// Forcing given by a closure of time.
pub struct FnForcing<F>(pub F);

impl<T, F: Fn(f64) -> Result<T> + Sync> Forcing<T> for FnForcing<F> {
    fn at(&self, t: f64) -> Result<T> {
        (self.0)(t)
    }
}

fn ascending<T: Components>(t0: f64, h: f64, mut samples: Vec<T>) -> Result<TimeSampled<T>> {
    if h >= 0.0 {
        TimeSampled::new(t0, h.abs(), samples)
    } else {
        let t_end = t0 + h * (samples.len() - 1) as f64;
        samples.reverse();
        TimeSampled::new(t_end, -h, samples)
    }
}

fn advect<T: Components>(v: &VectorField3, f: &T) -> T {
    let fc = f.components();
    let comps: Vec<ScalarField3> = grads(&fc.iter().collect::<Vec<_>>())
        .into_iter()
        .map(|g| {
            let mut out = v.c[0].mul_collocated(&g.c[0]);
            out += &v.c[1].mul_collocated(&g.c[1]);
            out += &v.c[2].mul_collocated(&g.c[2]);
            out
        })
        .collect();
    T::from_components(comps)
}

/// Solve `(d_t + v . grad) f = g`, `f(t0) = f0`, on `steps` uniform steps from
/// `t0` to `t1` (either direction). The result is sampled in ascending time.
pub fn transport_solve<T: Components>(
    v: &TimeSampled<VectorField3>,
    g: Option<&dyn Forcing<T>>,
    f0: &T,
    t0: f64,
    t1: f64,
    steps: usize,
    opts: &TransportOptions,
) -> Result<TimeSampled<T>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("transport needs at least one step".into()));
    }
    check_range(v, t0, t1)?;
    if let Some(g) = g {
        let (lo, hi) = g.range();
        let tol = 1e-9 * (t1 - t0).abs();
        if t0.min(t1) < lo - tol || t0.max(t1) > hi + tol {
            return Err(Error::WindowOutOfRange { lo: t0.min(t1), hi: t0.max(t1), min: lo, max: hi });
        }
    }
    if v.grid() != f0.grid() {
        return Err(Error::GridMismatch(v.grid().n(), f0.grid().n()));
    }
    let h = (t1 - t0) / steps as f64;
    let grid = f0.grid();
    let forcing = |t: f64| -> Result<Option<T>> { g.map(|g| g.at(t)).transpose() };
    let mut out = Vec::with_capacity(steps + 1);
    out.push(f0.clone());
    match opts.scheme {
        Scheme::SemiLagrangian => {
            let mut clock = VelocityClock::new(v);
            let mut g_prev = forcing(t0)?;
            for k in 0..steps {
                let (ta, tb) = (t0 + k as f64 * h, t0 + (k + 1) as f64 * h);
                let mut carry = out[k].clone();
                if let Some(gp) = &g_prev {
                    carry.axpy(0.5 * h, gp);
                }
                let feet = grid_feet(&mut clock, grid, tb, ta, opts.substeps.max(1))?;
                let mut next: T = TrigSeries::new(&carry).eval_field(grid, &feet);
                let g_next = forcing(tb)?;
                if let Some(gn) = &g_next {
                    next.axpy(0.5 * h, gn);
                }
                out.push(next);
                g_prev = g_next;
            }
        }
        Scheme::Eulerian => {
            let vmax = v.sup_norm();
            let sub = ((h.abs() * vmax * PI * grid.n() as f64 / opts.cfl).ceil() as usize).max(1);
            let hs = h / sub as f64;
            // RK4 stages revisit each time: the midpoint twice, the step end once more
            let recent: Mutex<Vec<(u64, Arc<(VectorField3, Option<T>)>)>> = Mutex::new(Vec::new());
            let frozen = |t: f64| -> Result<Arc<(VectorField3, Option<T>)>> {
                if let Some((_, hit)) = recent.lock().expect("cache lock").iter().find(|(b, _)| *b == t.to_bits()) {
                    return Ok(hit.clone());
                }
                let entry = Arc::new((v.interp(t)?, forcing(t)?));
                let mut r = recent.lock().expect("cache lock");
                if r.len() == 3 {
                    r.remove(0);
                }
                r.push((t.to_bits(), entry.clone()));
                Ok(entry)
            };
            let rhs = |t: f64, f: &T| -> Result<T> {
                let fr = frozen(t)?;
                let mut r = advect(&fr.0, f);
                r.scale(-1.0);
                if let Some(gt) = &fr.1 {
                    r.axpy(1.0, gt);
                }
                Ok(r)
            };
            for k in 0..steps {
                let mut f = out[k].clone();
                for s in 0..sub {
                    let t = t0 + k as f64 * h + s as f64 * hs;
                    let k1 = rhs(t, &f)?;
                    let k2 = rhs(t + 0.5 * hs, &T::lincomb(1.0, &f, 0.5 * hs, &k1))?;
                    let k3 = rhs(t + 0.5 * hs, &T::lincomb(1.0, &f, 0.5 * hs, &k2))?;
                    let k4 = rhs(t + hs, &T::lincomb(1.0, &f, hs, &k3))?;
                    f.axpy(hs / 6.0, &k1);
                    f.axpy(hs / 3.0, &k2);
                    f.axpy(hs / 3.0, &k3);
                    f.axpy(hs / 6.0, &k4);
                }
                out.push(f);
            }
        }
    }
    ascending(t0, h, out)
}

/// Back-to-labels map `Gamma(t, x) = x + gamma(t, x)` with its gradient and
/// the pointwise inverse of the gradient.
#[derive(Clone, Debug)]
pub struct FlowChart {
    pub t_anchor: f64,
    pub gamma: TimeSampled<VectorField3>,
    /// `grad[a][b] = d_b Gamma^a`.
    pub grad: TimeSampled<MatrixField3>,
    pub grad_inv: TimeSampled<MatrixField3>,
    pub min_det: f64,
}

/// Smallest tolerated `det grad Gamma`.
pub const MIN_CHART_DET: f64 = 0.5;

fn inv3(m: [[f64; 3]; 3]) -> ([[f64; 3]; 3], f64) {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let c = |a: usize, b: usize| m[a % 3][b % 3];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[j][i] = (c(i + 1, j + 1) * c(i + 2, j + 2) - c(i + 1, j + 2) * c(i + 2, j + 1)) / det;
        }
    }
    (inv, det)
}

impl FlowChart {
    /// Chart from sampled periodic parts `gamma`.
    pub fn from_gamma(t_anchor: f64, gamma: TimeSampled<VectorField3>) -> Result<Self> {
        let mut grads = Vec::with_capacity(gamma.len());
        let mut invs = Vec::with_capacity(gamma.len());
        let mut min_det = f64::INFINITY;
        for (i, g) in gamma.samples.iter().enumerate() {
            let jac = jacobian(g);
            let grid = g.grid();
            let pointwise = |idx: usize| -> [[f64; 3]; 3] {
                std::array::from_fn(|a| std::array::from_fn(|b| jac[a][b].data[idx] + if a == b { 1.0 } else { 0.0 }))
            };
            let gm = MatrixField3::from_pointwise(grid, pointwise);
            let dets: Vec<f64> = (0..grid.len()).into_par_iter().map(|idx| inv3(gm.at(idx)).1).collect();
            let dmin = dets.iter().copied().fold(f64::INFINITY, f64::min);
            if dmin < MIN_CHART_DET {
                return Err(Error::DegenerateChart { det: dmin, t: gamma.time(i) });
            }
            min_det = min_det.min(dmin);
            invs.push(MatrixField3::from_pointwise(grid, |idx| inv3(gm.at(idx)).0));
            grads.push(gm);
        }
        let (t0, dt) = (gamma.t0, gamma.dt);
        Ok(Self {
            t_anchor,
            grad: TimeSampled::new(t0, dt, grads)?,
            grad_inv: TimeSampled::new(t0, dt, invs)?,
            gamma,
            min_det,
        })
    }

    /// `sup |grad Gamma - Id|` over the window.
    pub fn distance_from_identity(&self) -> f64 {
        self.grad
            .samples
            .iter()
            .map(|m| {
                let mut d = m.clone();
                for a in 0..3 {
                    d.get_mut(a, a).add_constant(-1.0);
                }
                d.sup_norm()
            })
            .fold(0.0, f64::max)
    }

    /// `sup |grad Gamma . grad Gamma^{-1} - Id|` over the window.
    pub fn inverse_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, mi) in self.grad.samples.iter().zip(&self.grad_inv.samples) {
            for idx in 0..m.c[0].data.len() {
                let (a, b) = (m.at(idx), mi.at(idx));
                for i in 0..3 {
                    for j in 0..3 {
                        let p: f64 = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                        worst = worst.max((p - if i == j { 1.0 } else { 0.0 }).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Back-to-labels chart anchored at `t_anchor` on the window
/// `t_anchor - steps_back h .. t_anchor + steps_fwd h`.
pub fn back_to_labels(
    v: &TimeSampled<VectorField3>,
    t_anchor: f64,
    steps_back: usize,
    steps_fwd: usize,
    h: f64,
    opts: &TransportOptions,
) -> Result<FlowChart> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("chart step must be positive".into()));
    }
    let grid = v.grid();
    check_range(v, t_anchor - steps_back as f64 * h, t_anchor + steps_fwd as f64 * h)?;
    let side = |steps: usize, dir: f64| -> Result<Vec<VectorField3>> {
        let mut out = vec![VectorField3::zeros(grid)];
        if steps == 0 {
            return Ok(out);
        }
        match opts.scheme {
            Scheme::SemiLagrangian => {
                let mut clock = VelocityClock::new(v);
                for k in 0..steps {
                    let ta = t_anchor + dir * k as f64 * h;
                    let tb = ta + dir * h;
                    let feet = grid_feet(&mut clock, grid, tb, ta, opts.substeps.max(1))?;
                    let prev: VectorField3 = TrigSeries::new(&out[k]).eval_field(grid, &feet);
                    let mut next = VectorField3::zeros(grid);
                    for idx in 0..grid.len() {
                        let x = grid.point(idx);
                        for a in 0..3 {
                            next.c[a].data[idx] = feet[idx][a] - x[a] + prev.c[a].data[idx];
                        }
                    }
                    out.push(next);
                }
            }
            Scheme::Eulerian => {
                let lo = t_anchor.min(t_anchor + dir * steps as f64 * h);
                let hi = t_anchor.max(t_anchor + dir * steps as f64 * h);
                let forcing = minus_velocity(v, lo, hi)?;
                let sol = transport_solve(v, Some(&forcing as &dyn Forcing<VectorField3>), &out[0], t_anchor, t_anchor + dir * steps as f64 * h, steps, opts)?;
                let mut s = sol.samples;
                if dir < 0.0 {
                    s.reverse();
                }
                out = s;
            }
        }
        Ok(out)
    };
    let mut back = side(steps_back, -1.0)?;
    let fwd = side(steps_fwd, 1.0)?;
    back.reverse();
    back.pop();
    back.extend(fwd);
    if back.len() < 2 {
        return Err(Error::InvalidArgument("chart window must contain at least one step".into()));
    }
    let gamma = TimeSampled::new(t_anchor - steps_back as f64 * h, h, back)?;
    FlowChart::from_gamma(t_anchor, gamma)
}

fn minus_velocity(v: &TimeSampled<VectorField3>, lo: f64, hi: f64) -> Result<TimeSampled<VectorField3>> {
    let i0 = ((lo - v.t0) / v.dt + 1e-9).floor().max(0.0) as usize;
    let i1 = (((hi - v.t0) / v.dt - 1e-9).ceil() as usize).min(v.len() - 1);
    let i0 = i0.min(i1.saturating_sub(1));
    let samples = (i0..=i1).map(|i| v.samples[i].scaled(-1.0)).collect();
    TimeSampled::new(v.time(i0), v.dt, samples)
}

/// Phase `xi_m = m . Gamma`: its periodic part `m . gamma` and gradient
/// `grad xi_m = grad Gamma^T m`.
#[derive(Clone, Debug)]
pub struct Phase {
    pub m: [i64; 3],
    pub periodic: TimeSampled<ScalarField3>,
    pub grad: TimeSampled<VectorField3>,
    pub min_grad: f64,
    pub max_grad: f64,
}

pub fn phase_function(m: [i64; 3], chart: &FlowChart) -> Result<Phase> {
    if m == [0, 0, 0] {
        return Err(Error::InvalidArgument("phase direction must be nonzero".into()));
    }
    let mf = m.map(|c| c as f64);
    let mut periodic = Vec::new();
    let mut grads = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (g, gm) in chart.gamma.samples.iter().zip(&chart.grad.samples) {
        let mut p = g.c[0].scaled(mf[0]);
        p.axpy(mf[1], &g.c[1]);
        p.axpy(mf[2], &g.c[2]);
        periodic.push(p);
        let mut gv = VectorField3::zeros(g.grid());
        for b in 0..3 {
            for a in 0..3 {
                gv.c[b].axpy(mf[a], gm.get(a, b));
            }
        }
        for idx in 0..gv.c[0].data.len() {
            let w = gv.at(idx);
            let nrm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            lo = lo.min(nrm);
            hi = hi.max(nrm);
        }
        grads.push(gv);
    }
    let (t0, dt) = (chart.gamma.t0, chart.gamma.dt);
    Ok(Phase {
        m,
        periodic: TimeSampled::new(t0, dt, periodic)?,
        grad: TimeSampled::new(t0, dt, grads)?,
        min_grad: lo,
        max_grad: hi,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub transport: TransportOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 40, transport: TransportOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct TransportElliptic {
    pub rho: TimeSampled<SymTensorField3>,
    pub iterations: usize,
    /// `sup_t |rho_(k+1) - rho_(k)|` for each update.
    pub differences: Vec<f64>,
    /// Ratios of successive differences.
    pub factors: Vec<f64>,
}

/// Right side `R[grad_a v^i grad_i rho^{ab} + Z^b]` of the transport-elliptic equation.
pub fn transport_elliptic_forcing(v: &VectorField3, rho: &SymTensorField3, z: Option<&VectorField3>) -> SymTensorField3 {
    forcing_with_jacobian(&jacobian(v), rho, z)
}

fn forcing_with_jacobian(dv: &[[ScalarField3; 3]; 3], rho: &SymTensorField3, z: Option<&VectorField3>) -> SymTensorField3 {
    let grid = rho.grid();
    let drho: Vec<[ScalarField3; 3]> = grads(&rho.c.iter().collect::<Vec<_>>()).into_iter().map(|g| g.c).collect();
    let mut u = match z {
        Some(z) => z.clone(),
        None => VectorField3::zeros(grid),
    };
    for b in 0..3 {
        for a in 0..3 {
            let s = crate::spectral::field::sym_index(a, b);
            for i in 0..3 {
                // dv[i][a] = d_a v^i
                u.c[b] += &dv[i][a].mul_collocated(&drho[s][i]);
            }
        }
    }
    antidiv_r(&u)
}

/// Picard iteration for `(d_t + v . grad) rho = R[grad_a v^i grad_i rho^{ab} + Z^b]`,
/// `rho(t0) = rho0`, on `steps` uniform steps from `t0` to `t1`.
pub fn transport_elliptic_solve(
    v: &TimeSampled<VectorField3>,
    z: Option<&dyn Forcing<VectorField3>>,
    rho0: &SymTensorField3,
    t0: f64,
    t1: f64,
    steps: usize,
    opts: &PicardOptions,
) -> Result<TransportElliptic> {
    let h = (t1 - t0) / steps.max(1) as f64;
    let lo = t0.min(t1);
    let dt = h.abs();
    let mut rho = TimeSampled::new(lo, dt, vec![rho0.clone(); steps + 1])?;
    let mut differences = Vec::new();
    let mut factors = Vec::new();
    // every iteration asks for grad v and Z at the same stage times
    type Frozen = Arc<([[ScalarField3; 3]; 3], Option<VectorField3>)>;
    let memo: Mutex<HashMap<u64, Frozen>> = Mutex::new(HashMap::new());
    let frozen = |t: f64| -> Result<Frozen> {
        if let Some(hit) = memo.lock().expect("memo lock").get(&t.to_bits()) {
            return Ok(hit.clone());
        }
        let f = Arc::new((jacobian(&v.interp(t)?), z.map(|z| z.at(t)).transpose()?));
        memo.lock().expect("memo lock").insert(t.to_bits(), f.clone());
        Ok(f)
    };
    for it in 1..=opts.max_iter {
        let prev = &rho;
        let forcing = FnForcing(|t: f64| -> Result<SymTensorField3> {
            let f = frozen(t)?;
            Ok(forcing_with_jacobian(&f.0, &prev.interp(t)?, f.1.as_ref()))
        });
        let next = transport_solve(v, Some(&forcing as &dyn Forcing<SymTensorField3>), rho0, t0, t1, steps, &opts.transport)?;
        let diff = next
            .samples
            .iter()
            .zip(&rho.samples)
            .map(|(a, b)| SymTensorField3::lincomb(1.0, a, -1.0, b).sup_norm())
            .fold(0.0, f64::max);
        if let Some(&prev) = differences.last() {
            factors.push(if prev > 0.0 { diff / prev } else { 0.0 });
        }
        differences.push(diff);
        let scale = next.sup_norm().max(f64::MIN_POSITIVE);
        rho = next;
        if diff <= opts.tol * scale || diff == 0.0 {
            return Ok(TransportElliptic { rho, iterations: it, differences, factors });
        }
    }
    Err(Error::NoConvergence { iters: opts.max_iter, diff: *differences.last().unwrap_or(&f64::NAN) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear(grid: Grid3, t0: f64, dt: f64, count: usize) -> TimeSampled<VectorField3> {
        TimeSampled::from_fn(t0, dt, count, |_| VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0])).unwrap()
    }

    #[test]
    fn trig_series_matches_closed_form() {
        let grid = Grid3::new(16).unwrap();
        let f = ScalarField3::from_fn(grid, |x| (2.0 * PI * (x[0] + 2.0 * x[2])).cos() + 0.3 * (2.0 * PI * x[1]).sin());
        let s = TrigSeries::new(&f);
        assert_eq!(s.active_modes(), 2);
        let x = [0.123, 0.456, 0.789];
        let mut o = [0.0];
        s.eval(x, &mut o);
        let want = (2.0 * PI * (x[0] + 2.0 * x[2])).cos() + 0.3 * (2.0 * PI * x[1]).sin();
        assert!((o[0] - want).abs() < 1e-13);
    }

    #[test]
    fn flow_of_shear() {
        let grid = Grid3::new(16).unwrap();
        let v = shear(grid, 0.0, 0.05, 5);
        let x = [0.2, 0.3, 0.4];
        let pos = integrate_flow(&v, 0.0, &[x], &[0.1]).unwrap();
        let want = x[0] + 0.1 * (2.0 * PI * x[1]).sin();
        assert!((pos[0][0][0] - want).abs() < 1e-8);
        assert!((pos[0][0][1] - x[1]).abs() < 1e-14);
    }

    #[test]
    fn chart_of_shear() {
        let grid = Grid3::new(16).unwrap();
        let v = shear(grid, 0.0, 0.02, 11);
        let chart = back_to_labels(&v, 0.1, 5, 5, 0.02, &TransportOptions::default()).unwrap();
        let i = chart.gamma.len() - 1;
        let t = chart.gamma.time(i) - 0.1;
        let g1 = &chart.gamma.samples[i].c[0];
        let want = ScalarField3::from_fn(grid, |x| -t * (2.0 * PI * x[1]).sin());
        assert!(g1.data.iter().zip(&want.data).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!((chart.min_det - 1.0).abs() < 1e-10);
        assert!(chart.inverse_defect() < 1e-10);
    }

    #[test]
    fn phase_linearity() {
        let grid = Grid3::new(16).unwrap();
        let v = shear(grid, 0.0, 0.02, 11);
        let chart = back_to_labels(&v, 0.1, 5, 5, 0.02, &TransportOptions::default()).unwrap();
        let p1 = phase_function([1, 0, 2], &chart).unwrap();
        let p2 = phase_function([2, 0, 4], &chart).unwrap();
        for (a, b) in p1.grad.samples.iter().zip(&p2.grad.samples) {
            for c in 0..3 {
                assert!(a.c[c].data.iter().zip(&b.c[c].data).all(|(x, y)| (2.0 * x - y).abs() < 1e-14));
            }
        }
        assert!(phase_function([0, 0, 0], &chart).is_err());
    }

    #[test]
    fn transport_out_of_range() {
        let grid = Grid3::new(8).unwrap();
        let v = shear(grid, 0.0, 0.1, 3);
        let f0 = ScalarField3::zeros(grid);
        assert!(transport_solve::<ScalarField3>(&v, None, &f0, 0.0, 0.5, 5, &TransportOptions::default()).is_err());
    }
}
