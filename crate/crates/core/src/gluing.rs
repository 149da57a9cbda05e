//! Gluing of local Euler solutions along a time partition of unity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler::{euler_rhs, local_euler_solve, EulerOptions, LocalSolution};
use crate::flow::{transport_elliptic_solve, transport_solve, FnForcing, Forcing, PicardOptions, Scheme, TransportOptions};
use crate::spectral::bump::{smoothed_indicator, smoothed_indicator_dt, smoothed_indicator_dtt};
use crate::spectral::field::{sym_index, Components, ScalarField3, SymTensorField3, TimeSampled, VectorField3};
use crate::spectral::io::write_f3d;
use crate::spectral::ops::{div, div_sym, grad, jacobian};
use crate::spectral::state::{residual_of, time_derivative, EulerReynoldsState, FreqEnergyLevels, ResidualReport};

/// `theta = delta (ln hat_xi)^{-2} Xi^{-1} e_v^{-1/2}`.
pub fn choose_theta(levels: &FreqEnergyLevels, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.04) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1/25), got {delta}")));
    }
    if !(levels.e_v > 0.0) {
        return Err(Error::InvalidArgument("e_v must be positive".into()));
    }
    if levels.e_r == 0.0 {
        return Err(Error::InvalidArgument("e_R = 0: the state is already an exact solution".into()));
    }
    let l = levels.hat_xi().ln();
    Ok(delta / (l * l * levels.xi * levels.e_v.sqrt()))
}

/// Partition of unity `eta_I` with `t0(I) = 8 theta I` and `t(I) = t0(I) + 4 theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    pub theta: f64,
}

impl TimePartition {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
        }
        Ok(Self { theta })
    }

    pub fn t0(&self, i: i64) -> f64 {
        8.0 * self.theta * i as f64
    }

    pub fn t_of(&self, i: i64) -> f64 {
        self.t0(i) + 4.0 * self.theta
    }

    fn edges(&self, i: i64) -> (f64, f64, f64) {
        let c = self.t0(i);
        (c - 4.0 * self.theta, c + 4.0 * self.theta, 0.5 * self.theta)
    }

    pub fn eta(&self, i: i64, t: f64) -> f64 {
        let (a, b, h) = self.edges(i);
        smoothed_indicator(t, a, b, h)
    }

    pub fn eta_dt(&self, i: i64, t: f64) -> f64 {
        let (a, b, h) = self.edges(i);
        smoothed_indicator_dt(t, a, b, h)
    }

    pub fn eta_dtt(&self, i: i64, t: f64) -> f64 {
        let (a, b, h) = self.edges(i);
        smoothed_indicator_dtt(t, a, b, h)
    }

    /// Closed support `[t0 - 9 theta / 2, t0 + 9 theta / 2]` of `eta_I`.
    pub fn support(&self, i: i64) -> (f64, f64) {
        (self.t0(i) - 4.5 * self.theta, self.t0(i) + 4.5 * self.theta)
    }

    /// Indices whose support meets `[lo, hi]`.
    pub fn indices(&self, lo: f64, hi: f64) -> Vec<i64> {
        let first = ((lo / self.theta - 4.5) / 8.0).floor() as i64;
        let last = ((hi / self.theta + 4.5) / 8.0).ceil() as i64;
        (first..=last)
            .filter(|&i| {
                let (a, b) = self.support(i);
                a < hi && b > lo
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlueOptions {
    pub euler: EulerOptions,
    pub picard: PicardOptions,
    pub z_transport: TransportOptions,
    /// Relative tolerance on `|div r_I - y_I| / |y_I|`.
    pub antidiv_tol: f64,
}

impl Default for GlueOptions {
    fn default() -> Self {
        let transport = TransportOptions { scheme: Scheme::Eulerian, substeps: 1, cfl: 1.0 };
        Self {
            euler: EulerOptions::default(),
            picard: PicardOptions { tol: 1e-9, max_iter: 40, transport },
            z_transport: transport,
            antidiv_tol: 1e-3,
        }
    }
}

/// Per-index diagnostics.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LocalReport {
    pub index: i64,
    pub t0: f64,
    pub window: (f64, f64),
    pub y_sup: f64,
    pub r_sup: f64,
    pub pbar_sup: f64,
    pub antidiv_error: f64,
    pub energy_drift: f64,
    pub grad_growth: f64,
    pub picard_iterations: Vec<usize>,
    pub picard_factors: Vec<f64>,
    pub stress_sup: f64,
}

/// Velocity and pressure corrections of one local solution on its window.
#[derive(Clone, Debug)]
pub struct LocalPiece {
    pub y: TimeSampled<VectorField3>,
    pub pbar: TimeSampled<ScalarField3>,
    /// `r_I` restricted to the overlap with `I - 1` and with `I + 1`.
    r_lo: Option<TimeSampled<SymTensorField3>>,
    r_hi: Option<TimeSampled<SymTensorField3>>,
}

#[derive(Clone, Debug)]
pub struct GluedFlow {
    pub tilde_v: TimeSampled<VectorField3>,
    pub tilde_p: TimeSampled<ScalarField3>,
    /// `R_I` on the samples in `[t(I) - theta/2, t(I) + theta/2]`.
    pub stresses: BTreeMap<i64, TimeSampled<SymTensorField3>>,
    pub t_of_i: BTreeMap<i64, f64>,
    pub theta: f64,
    pub partition: TimePartition,
    pub pieces: BTreeMap<i64, LocalPiece>,
    pub reports: Vec<LocalReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub theta: f64,
    pub t_of_i: BTreeMap<i64, f64>,
    pub norms: BTreeMap<String, f64>,
    pub reports: Vec<LocalReport>,
}

/// Sample index range of `v` lying in `[lo, hi]`.
fn sample_range<T: Components>(v: &TimeSampled<T>, lo: f64, hi: f64) -> Option<(usize, usize)> {
    let tol = 1e-9 * v.dt;
    let a = ((lo - v.t0) / v.dt - tol).ceil().max(0.0) as usize;
    let b = (((hi - v.t0) / v.dt + tol).floor() as i64).min(v.len() as i64 - 1);
    if b < a as i64 {
        None
    } else {
        Some((a, b as usize))
    }
}

fn slice<T: Components>(v: &TimeSampled<T>, a: usize, b: usize) -> Result<TimeSampled<T>> {
    TimeSampled::new(v.time(a), v.dt, v.samples[a..=b].to_vec())
}

/// Concatenate two sample runs that share the sample at their junction.
fn join<T: Components>(back: Option<TimeSampled<T>>, fwd: Option<TimeSampled<T>>) -> Result<TimeSampled<T>> {
    match (back, fwd) {
        (Some(mut b), Some(f)) => {
            b.samples.extend(f.samples.into_iter().skip(1));
            Ok(b)
        }
        (Some(b), None) => Ok(b),
        (None, Some(f)) => Ok(f),
        (None, None) => Err(Error::InvalidArgument("empty window".into())),
    }
}

/// `d_a v^i d_i z^{ab} - y^i d_i v^b`.
fn z_source(v: &VectorField3, z: &SymTensorField3, y: &VectorField3) -> VectorField3 {
    let dv = jacobian(v);
    let mut out = VectorField3::zeros(v.grid());
    for b in 0..3 {
        for i in 0..3 {
            out.c[b] -= &y.c[i].mul_collocated(&dv[b][i]);
        }
    }
    for (s, &(a, b)) in crate::spectral::field::SYM_PAIRS.iter().enumerate() {
        let dz = grad(&z.c[s]);
        for i in 0..3 {
            out.c[b] += &dv[i][a].mul_collocated(&dz.c[i]);
            if a != b {
                out.c[a] += &dv[i][b].mul_collocated(&dz.c[i]);
            }
        }
    }
    out
}

struct HalfWindow {
    z: TimeSampled<SymTensorField3>,
    rho: TimeSampled<SymTensorField3>,
    iterations: usize,
    factors: Vec<f64>,
}

/// `r = z + rho` on one side of `t0(I)`, from `r(t0) = 0`.
fn antidiv_half(
    v: &TimeSampled<VectorField3>,
    r_in: &TimeSampled<SymTensorField3>,
    y: &TimeSampled<VectorField3>,
    pbar: &TimeSampled<ScalarField3>,
    t0: f64,
    t1: f64,
    steps: usize,
    opts: &GlueOptions,
) -> Result<HalfWindow> {
    let grid = v.grid();
    let zero = SymTensorField3::zeros(grid);
    let zf = FnForcing(|t: f64| -> Result<SymTensorField3> {
        let yt = y.interp(t)?;
        let mut f = yt.outer_self();
        f.scale(-1.0);
        let p = pbar.interp(t)?;
        for a in 0..3 {
            f.c[sym_index(a, a)] -= &p;
        }
        f.axpy(-1.0, &r_in.interp(t)?);
        Ok(f)
    });
    let z = transport_solve(v, Some(&zf as &dyn Forcing<SymTensorField3>), &zero, t0, t1, steps, &opts.z_transport)?;
    let big_z = FnForcing(|t: f64| -> Result<VectorField3> { Ok(z_source(&v.interp(t)?, &z.interp(t)?, &y.interp(t)?)) });
    let te = transport_elliptic_solve(v, Some(&big_z as &dyn Forcing<VectorField3>), &zero, t0, t1, steps, &opts.picard)?;
    Ok(HalfWindow { z, rho: te.rho, iterations: te.iterations, factors: te.factors })
}

fn max_relative_antidiv(r: &TimeSampled<SymTensorField3>, y: &TimeSampled<VectorField3>) -> f64 {
    let ysup = y.sup_norm();
    if ysup == 0.0 {
        return 0.0;
    }
    r.samples
        .iter()
        .enumerate()
        .map(|(i, ri)| {
            let yi = y.interp(r.time(i)).expect("y covers r");
            VectorField3::lincomb(1.0, &div_sym(ri), -1.0, &yi).sup_norm()
        })
        .fold(0.0, f64::max)
        / ysup
}

fn restrict<T: Components>(f: &TimeSampled<T>, lo: f64, hi: f64) -> Option<TimeSampled<T>> {
    let (a, b) = sample_range(f, lo, hi)?;
    if b <= a {
        return None;
    }
    slice(f, a, b).ok()
}

struct Solved {
    piece: LocalPiece,
    report: LocalReport,
}

fn solve_index(state: &EulerReynoldsState, part: &TimePartition, i: i64, opts: &GlueOptions) -> Result<Solved> {
    let v = &state.v;
    let theta = part.theta;
    let t0 = part.t0(i);
    let i0 = v.index_of(t0).ok_or_else(|| {
        Error::InvalidArgument(format!("t0({i}) = {t0} is not a sample time of the state"))
    })?;
    let (lo, hi) = part.support(i);
    let (ia, ib) = sample_range(v, lo, hi).ok_or_else(|| Error::InvalidArgument("empty window".into()))?;
    let u0 = &v.samples[i0];

    let solve = |to: usize| -> Result<Option<LocalSolution>> {
        if to == i0 {
            return Ok(None);
        }
        let steps = to.abs_diff(i0);
        local_euler_solve(u0, t0, v.time(to), steps, &opts.euler).map(Some)
    };
    let back = solve(ia)?;
    let fwd = solve(ib)?;
    let drift = back.iter().chain(fwd.iter()).map(|s| s.energy_drift).fold(0.0, f64::max);
    let growth = back.iter().chain(fwd.iter()).map(|s| s.grad_growth).fold(1.0, f64::max);
    let split = |s: Option<LocalSolution>| s.map(|s| (s.u, s.p)).unzip();
    let (ub, pb) = split(back);
    let (uf, pf) = split(fwd);
    let u = join(ub, uf)?;
    let p_loc = join(pb, pf)?;

    let mut y = u;
    let mut pbar = p_loc;
    for (k, (ys, ps)) in y.samples.iter_mut().zip(pbar.samples.iter_mut()).enumerate() {
        ys.axpy(-1.0, &v.samples[ia + k]);
        ps.axpy(-1.0, &state.p.samples[ia + k]);
        let m = ps.mean();
        ps.add_constant(-m);
    }

    let mut halves = Vec::new();
    for to in [ia, ib] {
        if to == i0 {
            continue;
        }
        halves.push((to < i0, antidiv_half(v, &state.r, &y, &pbar, t0, v.time(to), to.abs_diff(i0), opts)?));
    }
    let mut iterations = Vec::new();
    let mut factors = Vec::new();
    let mut parts_back = None;
    let mut parts_fwd = None;
    for (is_back, h) in halves {
        iterations.push(h.iterations);
        factors.extend(h.factors);
        let mut r = h.z;
        for (a, b) in r.samples.iter_mut().zip(&h.rho.samples) {
            a.axpy(1.0, b);
        }
        if is_back {
            parts_back = Some(r);
        } else {
            parts_fwd = Some(r);
        }
    }
    let r = join(parts_back, parts_fwd)?;
    let antidiv_error = max_relative_antidiv(&r, &y);
    if antidiv_error > opts.antidiv_tol {
        return Err(Error::CheckFailed(format!(
            "anti-divergence of y_{i}: relative error {antidiv_error:.3e} exceeds {:.1e}",
            opts.antidiv_tol
        )));
    }
    let report = LocalReport {
        index: i,
        t0,
        window: (v.time(ia), v.time(ib)),
        y_sup: y.sup_norm(),
        r_sup: r.sup_norm(),
        pbar_sup: pbar.sup_norm(),
        antidiv_error,
        energy_drift: drift,
        grad_growth: growth,
        picard_iterations: iterations,
        picard_factors: factors,
        stress_sup: 0.0,
    };
    let half = 0.5 * theta;
    let r_lo = restrict(&r, part.t_of(i - 1) - half, part.t_of(i - 1) + half);
    let r_hi = restrict(&r, part.t_of(i) - half, part.t_of(i) + half);
    Ok(Solved { piece: LocalPiece { y, pbar, r_lo, r_hi }, report })
}

/// Glue local Euler solutions started from `state.v` at the times `t0(I)`.
///
/// `t0(I)` must be sample times of the state. Indices whose window sees no
/// stress are skipped: there the local solution is `v` itself.
pub fn glue_flow(state: &EulerReynoldsState, theta: f64, opts: &GlueOptions) -> Result<GluedFlow> {
    let part = TimePartition::new(theta)?;
    let v = &state.v;
    if v.len() < 3 {
        return Err(Error::InvalidArgument("state needs at least 3 time samples".into()));
    }
    let (t_lo, t_hi) = (v.t0, v.t_end());
    let mut pieces = BTreeMap::new();
    let mut reports = Vec::new();
    let mut t_of_i = BTreeMap::new();
    for i in part.indices(t_lo, t_hi) {
        t_of_i.insert(i, part.t_of(i));
        let (lo, hi) = part.support(i);
        let Some((a, b)) = sample_range(v, lo, hi) else { continue };
        if state.r.samples[a..=b].iter().all(|r| r.sup_norm() == 0.0) {
            continue;
        }
        let s = solve_index(state, &part, i, opts)?;
        pieces.insert(i, s.piece);
        reports.push(s.report);
    }

    let mut tilde_v = v.clone();
    let mut tilde_p = state.p.clone();
    for (k, (vs, ps)) in tilde_v.samples.iter_mut().zip(tilde_p.samples.iter_mut()).enumerate() {
        let t = v.time(k);
        for (&i, piece) in &pieces {
            let e = part.eta(i, t);
            if e == 0.0 {
                continue;
            }
            if let (Some(ys), Some(pb)) = (piece.y.index_of(t), piece.pbar.index_of(t)) {
                vs.axpy(e, &piece.y.samples[ys]);
                ps.axpy(e, &piece.pbar.samples[pb]);
            }
        }
    }

    let mut stresses = BTreeMap::new();
    let indices: Vec<i64> = t_of_i.keys().copied().collect();
    for &i in &indices {
        let (a_piece, b_piece) = (pieces.get(&i), pieces.get(&(i + 1)));
        if a_piece.is_none() && b_piece.is_none() {
            continue;
        }
        let half = 0.5 * theta;
        let Some((a, b)) = sample_range(v, part.t_of(i) - half, part.t_of(i) + half) else { continue };
        let grid = v.grid();
        let mut out = Vec::with_capacity(b - a + 1);
        for k in a..=b {
            let t = v.time(k);
            let y_at = |p: Option<&LocalPiece>| -> VectorField3 {
                p.and_then(|p| p.y.index_of(t).map(|j| p.y.samples[j].clone())).unwrap_or_else(|| VectorField3::zeros(grid))
            };
            let r_at = |r: Option<&TimeSampled<SymTensorField3>>| -> SymTensorField3 {
                r.and_then(|r| r.index_of(t).map(|j| r.samples[j].clone())).unwrap_or_else(|| SymTensorField3::zeros(grid))
            };
            let dr = SymTensorField3::lincomb(
                1.0,
                &r_at(a_piece.and_then(|p| p.r_hi.as_ref())),
                -1.0,
                &r_at(b_piece.and_then(|p| p.r_lo.as_ref())),
            );
            let dy = VectorField3::lincomb(1.0, &y_at(a_piece), -1.0, &y_at(b_piece));
            let mut ri = dr.scaled(part.eta_dt(i, t));
            ri.axpy(-part.eta(i, t) * part.eta(i + 1, t), &dy.outer_self());
            out.push(ri);
        }
        let ts = if out.len() >= 2 {
            TimeSampled::new(v.time(a), v.dt, out)?
        } else {
            continue;
        };
        if let Some(rep) = reports.iter_mut().find(|r| r.index == i) {
            rep.stress_sup = ts.sup_norm();
        }
        stresses.insert(i, ts);
    }

    Ok(GluedFlow { tilde_v, tilde_p, stresses, t_of_i, theta, partition: part, pieces, reports })
}

impl GluedFlow {
    /// `sum_I R_I` on the full sampling of `tilde_v`.
    pub fn total_stress(&self) -> Result<TimeSampled<SymTensorField3>> {
        let grid = self.tilde_v.grid();
        let samples = (0..self.tilde_v.len())
            .map(|k| {
                let t = self.tilde_v.time(k);
                let mut s = SymTensorField3::zeros(grid);
                for r in self.stresses.values() {
                    if let Some(j) = r.index_of(t) {
                        s.axpy(1.0, &r.samples[j]);
                    }
                }
                s
            })
            .collect();
        TimeSampled::new(self.tilde_v.t0, self.tilde_v.dt, samples)
    }

    /// Euler-Reynolds residual with finite-difference time derivatives.
    pub fn residual(&self) -> Result<ResidualReport> {
        residual_of(&self.tilde_v, &self.tilde_p, &self.total_stress()?)
    }

    /// Residual with `d_t tilde_v` assembled from `eta_I'` and the Euler
    /// right side of each local solution, so no time differencing of the
    /// cutoffs enters. `input_v` supplies `d_t v` where no local solution acts.
    pub fn residual_semi_analytic(&self, input_v: &TimeSampled<VectorField3>) -> Result<ResidualReport> {
        let total = self.total_stress()?;
        let mut rep = ResidualReport::default();
        for k in 0..self.tilde_v.len() {
            let t = self.tilde_v.time(k);
            let mut dt = VectorField3::zeros(self.tilde_v.grid());
            let mut covered = 0.0;
            for (&i, piece) in &self.pieces {
                let e = self.partition.eta(i, t);
                let Some(j) = piece.y.index_of(t) else { continue };
                let u = VectorField3::lincomb(1.0, &input_v.samples[k], 1.0, &piece.y.samples[j]);
                dt.axpy(self.partition.eta_dt(i, t), &piece.y.samples[j]);
                if e != 0.0 {
                    dt.axpy(e, &euler_rhs(&u).0);
                    covered += e;
                }
            }
            if (1.0 - covered).abs() > 0.0 {
                dt.axpy(1.0 - covered, &time_derivative(input_v, k));
            }
            let vt = &self.tilde_v.samples[k];
            let mut res = dt;
            res.axpy(1.0, &div_sym(&vt.outer_self()));
            res.axpy(1.0, &grad(&self.tilde_p.samples[k]));
            res.axpy(-1.0, &div_sym(&total.samples[k]));
            let g = vt.grid();
            let pointwise: Vec<f64> = (0..g.len())
                .map(|idx| {
                    let a = res.at(idx);
                    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
                })
                .collect();
            rep.times.push(t);
            rep.max.push(pointwise.iter().copied().fold(0.0, f64::max));
            rep.mean.push(pointwise.iter().sum::<f64>() / pointwise.len() as f64);
            rep.max_div_v.push(div(vt).max_abs());
        }
        Ok(rep)
    }

    /// Largest distance of a nonzero `R_I` sample from `t(I)`, in units of theta.
    pub fn max_stress_offset(&self) -> f64 {
        self.stresses
            .iter()
            .flat_map(|(i, r)| {
                let c = self.partition.t_of(*i);
                r.samples
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.sup_norm() > 0.0)
                    .map(move |(k, _)| (r.time(k) - c).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
            / self.theta
    }

    pub fn manifest(&self) -> Manifest {
        let mut norms = BTreeMap::new();
        norms.insert("tilde_v_sup".to_string(), self.tilde_v.sup_norm());
        norms.insert("tilde_p_sup".to_string(), self.tilde_p.sup_norm());
        for (i, r) in &self.stresses {
            norms.insert(format!("R_{i}_sup"), r.sup_norm());
        }
        Manifest { theta: self.theta, t_of_i: self.t_of_i.clone(), norms, reports: self.reports.clone() }
    }

    /// Write `R_I` bundles, the glued velocity at each sample, and `glued.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, r) in &self.stresses {
            for (k, s) in r.samples.iter().enumerate() {
                let comps: Vec<&ScalarField3> = s.c.iter().collect();
                write_f3d(&dir.join(format!("R_{i}_{k:03}.f3d")), &comps, r.time(k))?;
            }
        }
        for (k, s) in self.tilde_v.samples.iter().enumerate() {
            let comps: Vec<&ScalarField3> = s.c.iter().collect();
            write_f3d(&dir.join(format!("v_{k:03}.f3d")), &comps, self.tilde_v.time(k))?;
        }
        std::fs::write(dir.join("glued.json"), serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(())
    }
}

/// Euler-Reynolds state `v = a(t) V` with `V = (sin 2 pi x2, 0, sin 2 pi x1)`
/// and `a(t) = 1 + amp sin(2 pi t / period)`. The pressure and stress are the
/// exact discrete ones: `p = -Lap^{-1} div F`, `R = R[F + grad p]` with
/// `F = d_t v + div(v (x) v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearSeed {
    pub amp: f64,
    pub period: f64,
}

impl Default for ShearSeed {
    fn default() -> Self {
        Self { amp: 0.5, period: 1.0 }
    }
}

impl ShearSeed {
    fn a(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * std::f64::consts::PI / self.period;
        (1.0 + self.amp * (w * t).sin(), self.amp * w * (w * t).cos())
    }

    fn base(grid: crate::spectral::grid::Grid3) -> VectorField3 {
        use std::f64::consts::PI;
        VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.0, (2.0 * PI * x[0]).sin()])
    }

    fn triple(&self, base: &VectorField3, t: f64) -> (VectorField3, ScalarField3, SymTensorField3) {
        let (a, da) = self.a(t);
        let v = base.scaled(a);
        let mut f = div_sym(&v.outer_self());
        f.axpy(da, base);
        let p = crate::spectral::ops::laplace_inverse(&div(&f)).scaled(-1.0);
        f.axpy(1.0, &grad(&p));
        (v, p, crate::spectral::ops::antidiv_r(&f))
    }

    /// Levels `(3, sup |v|^2, sup |R|)` over one period.
    pub fn levels(&self, grid: crate::spectral::grid::Grid3) -> Result<FreqEnergyLevels> {
        let base = Self::base(grid);
        let (mut ev, mut er) = (0.0f64, 0.0f64);
        for k in 0..32 {
            let (v, _, r) = self.triple(&base, self.period * k as f64 / 32.0);
            ev = ev.max(v.sup_norm().powi(2));
            er = er.max(r.sup_norm());
        }
        FreqEnergyLevels::new(3.0, ev, er)
    }

    pub fn state(&self, grid: crate::spectral::grid::Grid3, t0: f64, dt: f64, count: usize) -> Result<EulerReynoldsState> {
        let base = Self::base(grid);
        let (mut vs, mut ps, mut rs) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..count {
            let (v, p, r) = self.triple(&base, t0 + k as f64 * dt);
            vs.push(v);
            ps.push(p);
            rs.push(r);
        }
        let t_end = t0 + dt * (count - 1) as f64;
        EulerReynoldsState::new(
            TimeSampled::new(t0, dt, vs)?,
            TimeSampled::new(t0, dt, ps)?,
            TimeSampled::new(t0, dt, rs)?,
            self.levels(grid)?,
            (t0, t_end),
        )
    }
}
