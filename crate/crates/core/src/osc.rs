//! Symmetric anti-divergence of oscillatory fields `u(x) omega(lambda Gamma(x))`
//! by a nonstationary phase parametrix.
//!
//! On the unit torus the phase of mode `m` is `exp(2 pi i lambda m . Gamma)`,
//! so `2 pi lambda` plays the role of the large parameter.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowChart;
use crate::spectral::fft::C64;
use crate::spectral::field::{Components, MatrixField3, ScalarField3, SymTensorField3, TimeSampled, VectorField3, SYM_PAIRS};
use crate::spectral::grid::Grid3;
use crate::spectral::ops::{antidiv_r, div_sym_complex};

const IM: C64 = Complex64 { re: 0.0, im: 1.0 };

/// Real kernel `A(P, w)` with `q_bar(P)[w] = -i A(P, w)`, in symmetric slot order.
#[inline]
pub fn a_kernel(p: [f64; 3], w: [f64; 3]) -> [f64; 6] {
    let s = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    let wp = w[0] * p[0] + w[1] * p[1] + w[2] * p[2];
    let mut out = [0.0; 6];
    for (slot, &(j, l)) in SYM_PAIRS.iter().enumerate() {
        let d = if j == l { wp } else { 0.0 };
        out[slot] = (d + p[j] * w[l] + w[j] * p[l] - 2.0 * wp * p[j] * p[l] / s) / s;
    }
    out
}

/// `q_bar(p)[u]`: the symmetric solution of `i p_j q^{jl} = u^l`, homogeneous
/// of degree -1 in `p`.
pub fn qbar(p: [f64; 3], u: [f64; 3]) -> Result<[[C64; 3]; 3]> {
    if p.iter().all(|&c| c == 0.0) {
        return Err(Error::InvalidArgument("q_bar needs a nonzero covector".into()));
    }
    let a = a_kernel(p, u);
    let mut q = [[C64::default(); 3]; 3];
    for (slot, &(j, l)) in SYM_PAIRS.iter().enumerate() {
        q[j][l] = -IM * a[slot];
        q[l][j] = q[j][l];
    }
    Ok(q)
}

/// Chart data at one time: `Gamma = x + gamma` and `grad Gamma` (`[a][b] = d_b Gamma^a`).
#[derive(Clone, Copy)]
pub enum ChartAt<'a> {
    Identity,
    Map { gamma: &'a VectorField3, grad: &'a MatrixField3 },
}

impl<'a> ChartAt<'a> {
    pub fn of(chart: &'a FlowChart, i: usize) -> Self {
        ChartAt::Map { gamma: &chart.gamma.samples[i], grad: &chart.grad.samples[i] }
    }
}

/// Pointwise `exp(2 pi i lambda m . Gamma)` and `grad xi_m = grad Gamma^T m`.
fn phase(grid: Grid3, m: [i64; 3], lambda: u32, chart: ChartAt) -> Result<(Vec<C64>, Vec<[f64; 3]>)> {
    let n = grid.n() as i64;
    let lam = lambda as i64;
    let mf = m.map(|c| c as f64);
    let mnorm = (mf[0] * mf[0] + mf[1] * mf[1] + mf[2] * mf[2]).sqrt();
    let out: Vec<(C64, [f64; 3], f64)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let ijk = grid.unflatten(idx);
            let lin = (lam * (m[0] * ijk[0] as i64 + m[1] * ijk[1] as i64 + m[2] * ijk[2] as i64)).rem_euclid(n);
            let mut ang = 2.0 * PI * lin as f64 / n as f64;
            let mut p = mf;
            if let ChartAt::Map { gamma, grad } = chart {
                let g = gamma.at(idx);
                ang += 2.0 * PI * lambda as f64 * (mf[0] * g[0] + mf[1] * g[1] + mf[2] * g[2]);
                let gm = grad.at(idx);
                p = std::array::from_fn(|b| (0..3).map(|a| mf[a] * gm[a][b]).sum());
            }
            let pn = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            (C64::from_polar(1.0, ang), p, pn)
        })
        .collect();
    let min = out.iter().map(|o| o.2).fold(f64::INFINITY, f64::min);
    if min < 0.1 * mnorm {
        return Err(Error::DegeneratePhase { value: min, bound: 0.1 * mnorm });
    }
    Ok(out.into_iter().map(|(e, p, _)| (e, p)).unzip())
}

/// `-i A(P, w)` at every point for a complex vector field `w`.
fn qbar_field(ps: &[[f64; 3]], w: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let pts: Vec<[C64; 6]> = ps
        .par_iter()
        .enumerate()
        .map(|(idx, &p)| {
            let re = a_kernel(p, [w[0][idx].re, w[1][idx].re, w[2][idx].re]);
            let im = a_kernel(p, [w[0][idx].im, w[1][idx].im, w[2][idx].im]);
            std::array::from_fn(|s| -IM * C64::new(re[s], im[s]))
        })
        .collect();
    (0..6).map(|s| pts.iter().map(|q| q[s]).collect()).collect()
}

/// One parametrix mode: `Q_m = (2 pi lambda)^{-1} sum_k e q_(k) + R[e u_(D)]`.
#[derive(Clone, Debug)]
pub struct ModeParts {
    /// `(2 pi lambda)^{-1} e sum_k q_(k)`, complex samples per symmetric slot.
    pub leading: Vec<Vec<C64>>,
    /// `e u_(D)`, complex samples per component.
    pub remainder_source: Vec<Vec<C64>>,
    /// `e = exp(2 pi i lambda xi_m)`.
    pub phase: Vec<C64>,
}

pub fn parametrix_parts(u: &VectorField3, m: [i64; 3], lambda: u32, chart: ChartAt, order: usize) -> Result<ModeParts> {
    if m == [0, 0, 0] {
        return Err(Error::InvalidArgument("mode m = 0 has no phase".into()));
    }
    if order == 0 || lambda == 0 {
        return Err(Error::InvalidArgument("parametrix needs order >= 1 and lambda >= 1".into()));
    }
    let grid = u.grid();
    let limit = grid.nyquist().abs() as f64;
    let freq = lambda as f64 * m.iter().map(|c| c.abs()).max().unwrap_or(0) as f64;
    if freq >= limit {
        return Err(Error::Nyquist { freq, limit });
    }
    let (e, ps) = phase(grid, m, lambda, chart)?;
    let scale = 1.0 / (2.0 * PI * lambda as f64);
    let mut w: Vec<Vec<C64>> = u.c.iter().map(|c| c.data.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
    let mut sum_q = vec![vec![C64::default(); grid.len()]; 6];
    for _ in 0..order {
        let q = qbar_field(&ps, &w);
        for (acc, qs) in sum_q.iter_mut().zip(&q) {
            acc.iter_mut().zip(qs).for_each(|(a, b)| *a += b);
        }
        w = div_sym_complex(&grid, &q);
        w.iter_mut().for_each(|c| c.iter_mut().for_each(|z| *z *= -scale));
    }
    let leading = sum_q.into_iter().map(|c| c.into_iter().zip(&e).map(|(q, e)| q * e * scale).collect()).collect();
    let remainder_source = w.into_iter().map(|c| c.into_iter().zip(&e).map(|(x, e)| x * e).collect()).collect();
    Ok(ModeParts { leading, remainder_source, phase: e })
}

fn complex_antidiv(grid: &Grid3, src: &[Vec<C64>]) -> Vec<Vec<C64>> {
    crate::spectral::ops::antidiv_r_complex(grid, src)
}

/// Complex `Q_m` with `div Q_m = (1 - Pi_0)[u exp(2 pi i lambda m . Gamma)]`.
pub fn parametrix_mode(u: &VectorField3, m: [i64; 3], lambda: u32, chart: ChartAt, order: usize) -> Result<Vec<Vec<C64>>> {
    let parts = parametrix_parts(u, m, lambda, chart, order)?;
    let rem = complex_antidiv(&u.grid(), &parts.remainder_source);
    Ok(parts.leading.into_iter().zip(rem).map(|(a, b)| a.into_iter().zip(b).map(|(x, y)| x + y).collect()).collect())
}

/// Half-space Fourier representatives of a real profile with weights 2 (paired)
/// or 1 (self-conjugate on the grid).
#[derive(Clone, Debug)]
pub struct ProfileModes {
    pub modes: Vec<([i64; 3], C64, f64)>,
    pub dropped_l1: f64,
}

pub fn profile_modes(omega: &ScalarField3, coeff_tol: f64) -> Result<ProfileModes> {
    let g = omega.grid;
    let c = omega.modes();
    let cmax = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if cmax == 0.0 {
        return Err(Error::InvalidArgument("profile is identically zero".into()));
    }
    if c[0].norm() > 1e-12 * cmax.max(omega.max_abs()) {
        return Err(Error::InvalidArgument(format!("profile has nonzero mean {:.3e}", c[0].re)));
    }
    let n = g.n();
    let mut modes = Vec::new();
    let mut dropped = 0.0;
    for idx in 1..g.len() {
        let [i, j, k] = g.unflatten(idx);
        let neg = g.index((n - i) % n, (n - j) % n, (n - k) % n);
        if neg < idx {
            continue;
        }
        let wt = if neg == idx { 1.0 } else { 2.0 };
        if c[idx].norm() < coeff_tol * cmax {
            dropped += wt * c[idx].norm();
            continue;
        }
        modes.push((g.wavevector(idx), c[idx], wt));
    }
    if modes.is_empty() {
        return Err(Error::InvalidArgument("no profile modes above the coefficient tolerance".into()));
    }
    Ok(ProfileModes { modes, dropped_l1: dropped })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscOptions {
    pub order: usize,
    pub coeff_tol: f64,
}

impl Default for OscOptions {
    fn default() -> Self {
        Self { order: 2, coeff_tol: 1e-8 }
    }
}

/// Real solution at one time with its target and diagnostics.
#[derive(Clone, Debug)]
pub struct OscSample {
    pub q: SymTensorField3,
    /// `u omega_trunc(lambda Gamma)` on the grid.
    pub target: VectorField3,
    pub modes_used: usize,
    pub dropped_l1: f64,
}

/// `Q` with `div Q = (1 - Pi_0)[u omega(lambda Gamma)]` at one time.
pub fn solve_osc_at(u: &VectorField3, omega: &ScalarField3, lambda: u32, chart: ChartAt, opts: &OscOptions) -> Result<OscSample> {
    let pm = profile_modes(omega, opts.coeff_tol)?;
    solve_with_modes(u, &pm, lambda, chart, opts.order)
}

pub fn solve_with_modes(u: &VectorField3, pm: &ProfileModes, lambda: u32, chart: ChartAt, order: usize) -> Result<OscSample> {
    let grid = u.grid();
    let limit = grid.nyquist().abs() as f64;
    let top = pm.modes.iter().map(|(m, _, _)| m.iter().map(|c| c.abs()).max().unwrap_or(0)).max().unwrap_or(0);
    let freq = lambda as f64 * top as f64;
    if freq >= limit {
        return Err(Error::Nyquist { freq, limit });
    }
    let mut lead = vec![vec![0.0; grid.len()]; 6];
    let mut rem = vec![vec![0.0; grid.len()]; 3];
    let mut osc = vec![0.0; grid.len()];
    for &(m, c, wt) in &pm.modes {
        let parts = parametrix_parts(u, m, lambda, chart, order)?;
        let f = c * wt;
        for (acc, s) in lead.iter_mut().zip(&parts.leading) {
            acc.iter_mut().zip(s).for_each(|(a, z)| *a += (f * z).re);
        }
        for (acc, s) in rem.iter_mut().zip(&parts.remainder_source) {
            acc.iter_mut().zip(s).for_each(|(a, z)| *a += (f * z).re);
        }
        osc.iter_mut().zip(&parts.phase).for_each(|(a, e)| *a += (f * e).re);
    }
    let to_field = |d: Vec<f64>| ScalarField3::from_data(grid, d).expect("grid sized");
    let rem = VectorField3::from_components(rem.into_iter().map(to_field).collect());
    let mut q = SymTensorField3::from_components(lead.into_iter().map(to_field).collect());
    q.axpy(1.0, &antidiv_r(&rem));
    let osc = to_field(osc);
    let target = VectorField3::from_components(u.c.iter().map(|c| c.mul_collocated(&osc)).collect());
    Ok(OscSample { q, target, modes_used: pm.modes.len(), dropped_l1: pm.dropped_l1 })
}

/// Time-dependent oscillatory right-hand side `u(t, x) omega(lambda Gamma(t, x))`.
pub struct OscillatoryRhs<'a> {
    pub u: &'a TimeSampled<VectorField3>,
    pub omega: &'a ScalarField3,
    pub lambda: u32,
    /// `None` for `Gamma = x`; otherwise sampled at the times of `u`.
    pub chart: Option<&'a FlowChart>,
}

#[derive(Clone, Debug)]
pub struct OscSolution {
    pub q: TimeSampled<SymTensorField3>,
    pub modes_used: usize,
    pub dropped_l1: f64,
    /// `max_t |div Q - (1 - Pi_0) target| / |target|`.
    pub identity_error: f64,
}

pub fn solve_osc_divergence(rhs: &OscillatoryRhs, opts: &OscOptions) -> Result<OscSolution> {
    let pm = profile_modes(rhs.omega, opts.coeff_tol)?;
    let mut qs = Vec::with_capacity(rhs.u.len());
    let mut worst: f64 = 0.0;
    for i in 0..rhs.u.len() {
        let chart = match rhs.chart {
            None => ChartAt::Identity,
            Some(c) => {
                let t = rhs.u.time(i);
                let j = c.gamma.index_of(t).ok_or(Error::WindowOutOfRange {
                    lo: t,
                    hi: t,
                    min: c.gamma.t0,
                    max: c.gamma.t_end(),
                })?;
                ChartAt::of(c, j)
            }
        };
        let s = solve_with_modes(&rhs.u.samples[i], &pm, rhs.lambda, chart, opts.order)?;
        worst = worst.max(identity_error(&s.q, &s.target));
        qs.push(s.q);
    }
    Ok(OscSolution {
        q: TimeSampled::new(rhs.u.t0, rhs.u.dt, qs)?,
        modes_used: pm.modes.len(),
        dropped_l1: pm.dropped_l1,
        identity_error: worst,
    })
}

/// `|div Q - (target - mean target)|_inf / |target|_inf`.
pub fn identity_error(q: &SymTensorField3, target: &VectorField3) -> f64 {
    let mut d = crate::spectral::ops::div_sym(q);
    let mean = target.mean();
    for a in 0..3 {
        d.c[a].axpy(-1.0, &target.c[a]);
        d.c[a].add_constant(mean[a]);
    }
    let s = target.sup_norm();
    if s == 0.0 {
        d.sup_norm()
    } else {
        d.sup_norm() / s
    }
}

/// Identity chart with a constant amplitude `u`: the exact solution
/// `Q(x) = Q_cell(lambda x)`, returned on the grid of `omega` (one period cell).
pub fn constant_amplitude_antidiv(omega: &ScalarField3, u: [f64; 3], lambda: u32) -> Result<SymTensorField3> {
    let g = omega.grid;
    let c = omega.modes();
    let scale = 1.0 / (2.0 * PI * lambda as f64);
    let mut out = vec![vec![C64::default(); g.len()]; 6];
    for idx in 1..g.len() {
        let k = crate::spectral::ops::effective_k(&g, g.wavevector(idx));
        if k == [0.0; 3] {
            continue;
        }
        let a = a_kernel(k, u);
        for s in 0..6 {
            out[s][idx] = -IM * a[s] * c[idx] * scale;
        }
    }
    Ok(SymTensorField3::from_components(out.into_iter().map(|m| ScalarField3::from_modes(g, m)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn check_qbar(p: [f64; 3], u: [f64; 3]) -> f64 {
        let q = qbar(p, u).unwrap();
        (0..3)
            .map(|l| ((0..3).map(|j| IM * p[j] * q[j][l]).sum::<C64>() - u[l]).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn qbar_cases() {
        let q = qbar([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        assert!((q[0][2] + IM).norm() < 1e-15 && (q[2][0] + IM).norm() < 1e-15);
        assert!(q[0][0].norm() + q[1][1].norm() + q[2][2].norm() + q[0][1].norm() < 1e-15);
        let q = qbar([0.0, 0.0, 1.0], [0.0, 0.0, 1.0]).unwrap();
        for j in 0..3 {
            for l in 0..3 {
                let want = if j == l { -IM } else { C64::default() };
                assert!((q[j][l] - want).norm() < 1e-15);
            }
        }
        assert!(qbar([0.0; 3], [1.0, 0.0, 0.0]).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let u: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            assert!(check_qbar(p, u) < 1e-12);
            let q1 = qbar(p, u).unwrap();
            let q2 = qbar(p.map(|c| 2.0 * c), u).unwrap();
            for j in 0..3 {
                for l in 0..3 {
                    assert!((q2[j][l] * 2.0 - q1[j][l]).norm() < 1e-12);
                    assert_eq!(q1[j][l], q1[l][j]);
                }
            }
        }
    }

    #[test]
    fn constant_amplitude_trivial_chart_is_exact() {
        let grid = Grid3::new(16).unwrap();
        let u = VectorField3::constant(grid, [0.3, -0.2, 0.5]);
        let q = parametrix_mode(&u, [1, 0, 2], 2, ChartAt::Identity, 2).unwrap();
        let d = div_sym_complex(&grid, &q);
        let (e, _) = phase(grid, [1, 0, 2], 2, ChartAt::Identity).unwrap();
        let mut worst: f64 = 0.0;
        for l in 0..3 {
            for idx in 0..grid.len() {
                worst = worst.max((d[l][idx] - e[idx] * u.c[l].data[idx]).norm());
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn nyquist_and_degenerate_errors() {
        let grid = Grid3::new(16).unwrap();
        let u = VectorField3::constant(grid, [1.0, 0.0, 0.0]);
        assert!(matches!(parametrix_mode(&u, [1, 0, 0], 8, ChartAt::Identity, 2), Err(Error::Nyquist { .. })));
        assert!(parametrix_mode(&u, [0, 0, 0], 2, ChartAt::Identity, 2).is_err());
        let omega = ScalarField3::constant(grid, 1.0);
        assert!(profile_modes(&omega, 1e-8).is_err());
    }

    #[test]
    fn cosine_profile_has_one_pair() {
        let grid = Grid3::new(16).unwrap();
        let omega = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[2]).cos());
        let pm = profile_modes(&omega, 1e-8).unwrap();
        assert_eq!(pm.modes.len(), 1);
        assert_eq!(pm.modes[0].2, 2.0);
        let u = VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.5, 0.0]);
        let s = solve_osc_at(&u, &omega, 3, ChartAt::Identity, &OscOptions::default()).unwrap();
        assert!(identity_error(&s.q, &s.target) < 1e-10);
        let zero = solve_osc_at(&VectorField3::zeros(grid), &omega, 3, ChartAt::Identity, &OscOptions::default()).unwrap();
        assert_eq!(zero.q.sup_norm(), 0.0);
    }

    #[test]
    fn cell_multiplier_matches_parametrix() {
        let cell = Grid3::new(8).unwrap();
        let omega = ScalarField3::from_fn(cell, |x| (2.0 * PI * (x[0] + x[1])).cos() + 0.3 * (2.0 * PI * x[2]).sin());
        let u = [0.2, 0.7, -0.4];
        let qc = constant_amplitude_antidiv(&omega, u, 2).unwrap();
        let fine = Grid3::new(16).unwrap();
        let s = solve_osc_at(&VectorField3::constant(fine, u), &omega, 2, ChartAt::Identity, &OscOptions::default()).unwrap();
        for idx in 0..fine.len() {
            let [i, j, k] = fine.unflatten(idx);
            let cidx = cell.index(i % 8, j % 8, k % 8);
            for s_ in 0..6 {
                assert!((s.q.c[s_].data[idx] - qc.c[s_].data[cidx]).abs() < 1e-12);
            }
        }
    }
}
