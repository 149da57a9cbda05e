//! One convex integration step on top of a glued flow: energy cutoffs,
//! amplitudes, the Mikado correction and the new stress.
//!
//! [`convex_step`] works on the full grid with flow-map charts. The profile
//! spectrum times `lambda` must fit under the grid Nyquist limit, so with real
//! pipe profiles it is only usable on large grids. [`run_demo`] handles the
//! seed state, whose stress is spatially constant: there every corrected field
//! is `1/lambda`-periodic and is computed on one period cell.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{back_to_labels, TransportOptions, TrigSeries};
use crate::gluing::{choose_theta, glue_flow, GlueOptions, GluedFlow};
use crate::mikado::{antisymmetric_potential, basis_coefficients, PipeFamily, DIRECTIONS};
use crate::osc::{constant_amplitude_antidiv, profile_modes, solve_with_modes, ChartAt, OscOptions, ProfileModes};
use crate::spectral::bump::{raw_bump, smoothed_indicator, smoothed_indicator_dt};
use crate::spectral::field::{Components, MatrixField3, ScalarField3, SymTensorField3, TimeSampled, VectorField3, SYM_PAIRS};
use crate::spectral::grid::Grid3;
use crate::spectral::io::write_f3d;
use crate::spectral::mollify::mollify_field;
use crate::spectral::ops::{derivative, div, div_sym, jacobian};
use crate::spectral::state::{residual_of, EulerReynoldsState, FreqEnergyLevels};

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Smallest admissible `gamma^2`.
pub const MIN_RADICAND: f64 = 0.05;

/// Index pairs `alpha < beta` of the independent entries of an antisymmetric matrix.
const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

fn dirf(f: usize) -> [f64; 3] {
    DIRECTIONS[f].map(|c| c as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    /// Frequency growth factor `N`.
    #[serde(rename = "N")]
    pub n_growth: f64,
    pub b_lambda: f64,
    pub lambda: u32,
    pub eps_v: f64,
    pub eps_r: f64,
    /// Division-safety constant `K`.
    pub k_const: f64,
    pub b0: f64,
    /// Parametrix order `D`.
    pub order: usize,
    pub samples_per_theta: usize,
}

impl StepParams {
    /// `lambda = ceil(B_lambda N Xi)`.
    pub fn from_growth(levels: &FreqEnergyLevels, n_growth: f64, b_lambda: f64) -> Result<Self> {
        if !(n_growth > 0.0) || !(b_lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("need N > 0 and B_lambda > 0, got {n_growth}, {b_lambda}")));
        }
        let lambda = (b_lambda * n_growth * levels.xi).ceil();
        if lambda > u32::MAX as f64 {
            return Err(Error::InvalidArgument(format!("lambda {lambda} out of range")));
        }
        Ok(Self::build(levels, n_growth, b_lambda, lambda as u32))
    }

    /// Fix `lambda` directly; `N = lambda / (B_lambda Xi)`.
    pub fn from_lambda(levels: &FreqEnergyLevels, lambda: u32, b_lambda: f64) -> Result<Self> {
        if lambda == 0 || !(b_lambda > 0.0) {
            return Err(Error::InvalidArgument("lambda must be a positive integer".into()));
        }
        Ok(Self::build(levels, lambda as f64 / (b_lambda * levels.xi), b_lambda, lambda))
    }

    fn build(levels: &FreqEnergyLevels, n: f64, b_lambda: f64, lambda: u32) -> Self {
        let eps = (n.powf(-0.5) / levels.xi).min(0.25);
        Self {
            n_growth: n,
            b_lambda,
            lambda,
            eps_v: eps,
            eps_r: eps,
            k_const: 21.0,
            b0: 0.05,
            order: 2,
            samples_per_theta: 16,
        }
    }

    /// Smallest growth factor allowed by the levels: `max(Xi^eta, (e_v / e_R)^{1/2})`.
    pub fn min_growth(levels: &FreqEnergyLevels, eta: f64) -> f64 {
        levels.xi.powf(eta).max((levels.e_v / levels.e_r).sqrt())
    }

    /// Target stress scale `(log hat_xi)^{5/2} e_v^{1/2} e_R^{1/2} / N`.
    pub fn target_stress(&self, levels: &FreqEnergyLevels) -> f64 {
        levels.hat_xi().ln().powf(2.5) * (levels.e_v * levels.e_r).sqrt() / self.n_growth
    }
}

/// Time profile `e_I^{1/2}`: a plateau times the indicator of
/// `[t(I) - 3 theta/4, t(I) + 3 theta/4]` mollified at scale `theta/8`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyCutoff {
    pub t_i: f64,
    pub theta: f64,
    pub plateau: f64,
}

impl EnergyCutoff {
    fn edges(&self) -> (f64, f64, f64) {
        (self.t_i - 0.75 * self.theta, self.t_i + 0.75 * self.theta, self.theta / 8.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        let (a, b, h) = self.edges();
        self.plateau * smoothed_indicator(t, a, b, h)
    }

    pub fn dt(&self, t: f64) -> f64 {
        let (a, b, h) = self.edges();
        self.plateau * smoothed_indicator_dt(t, a, b, h)
    }

    /// `e_I(t)`.
    pub fn energy(&self, t: f64) -> f64 {
        self.value(t).powi(2)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.t_i - 0.875 * self.theta, self.t_i + 0.875 * self.theta)
    }
}

/// Cutoff with plateau `[K C_delta log(hat_xi) e_R]^{1/2}`.
pub fn energy_cutoff(t_i: f64, theta: f64, e_r: f64, log_hxi: f64, k: f64, c_delta: f64) -> Result<EnergyCutoff> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
    }
    let rad = k * c_delta * log_hxi * e_r;
    if !(rad >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative cutoff plateau radicand {rad}")));
    }
    Ok(EnergyCutoff { t_i, theta, plateau: rad.sqrt() })
}

/// `gamma_f` with `sum_f gamma_f^2 f (x) f = G (delta + eps) G^T`, `G[j][a] = d_a Gamma^j`.
pub fn amplitude_coeffs(grad: &[[f64; 3]; 3], eps: &[[f64; 3]; 3]) -> Result<[f64; 6]> {
    let mut m = [[0.0; 3]; 3];
    for j in 0..3 {
        for l in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    let d = if a == b { 1.0 } else { 0.0 };
                    m[j][l] += grad[j][a] * grad[l][b] * (d + eps[a][b]);
                }
            }
        }
    }
    let g2 = basis_coefficients(&m);
    let worst = g2.iter().copied().fold(f64::INFINITY, f64::min);
    if !(worst >= MIN_RADICAND) {
        return Err(Error::Radicand { value: worst });
    }
    Ok(g2.map(f64::sqrt))
}

/// `|sum_f gamma_f^2 (B f) (x) (B f) - (delta + eps)|` with `B = grad Gamma^{-1}`.
pub fn reconstruction_defect(grad_inv: &[[f64; 3]; 3], gammas: &[f64; 6], eps: &[[f64; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        for l in 0..3 {
            let mut s = 0.0;
            for (f, g) in gammas.iter().enumerate() {
                let fd = dirf(f);
                let bj: f64 = (0..3).map(|a| grad_inv[j][a] * fd[a]).sum();
                let bl: f64 = (0..3).map(|a| grad_inv[l][a] * fd[a]).sum();
                s += g * g * bj * bl;
            }
            let d = if j == l { 1.0 } else { 0.0 };
            worst = worst.max((s - d - eps[j][l]).abs());
        }
    }
    worst
}

/// Pointwise [`amplitude_coeffs`] over a grid.
pub fn amplitude_fields(grad: &MatrixField3, eps: &SymTensorField3) -> Result<Vec<ScalarField3>> {
    let grid = grad.grid();
    let vals: Vec<[f64; 6]> = (0..grid.len())
        .into_par_iter()
        .map(|idx| amplitude_coeffs(&grad.at(idx), &eps.at(idx)))
        .collect::<Result<_>>()?;
    Ok((0..6).map(|f| ScalarField3 { grid, data: vals.iter().map(|v| v[f]).collect() }).collect())
}

/// Profiles `psi_f` and antisymmetric potentials `Omega_f` with
/// `d_a Omega_f^{ab} = psi_f f^b`, all on one period cell.
#[derive(Clone, Debug)]
pub struct ProfileSet {
    pub psi: Vec<ScalarField3>,
    pub omega: Vec<MatrixField3>,
    pub label: String,
}

/// Wave vectors orthogonal to the matching direction in [`DIRECTIONS`].
const WAVES: [[i64; 3]; 6] = [[1, -1, 0], [1, 1, 0], [1, 0, -1], [1, 0, 1], [0, 1, -1], [0, 1, 1]];

impl ProfileSet {
    pub fn from_family(fam: &PipeFamily) -> Self {
        Self {
            psi: fam.profiles.clone(),
            omega: (0..6).map(|f| fam.pipe_antidiv(f)).collect(),
            label: "pipes".into(),
        }
    }

    /// `psi_f = sqrt(2) cos(2 pi k_f . X)` with `k_f . f = 0`: invariant along
    /// `f`, mean zero, `mean psi_f^2 = 1`, but not disjointly supported.
    pub fn plane_waves(grid: Grid3) -> Self {
        let psi: Vec<ScalarField3> = WAVES
            .iter()
            .map(|k| {
                ScalarField3::from_fn(grid, |x| {
                    2f64.sqrt() * (2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2])).cos()
                })
            })
            .collect();
        let omega = psi.iter().enumerate().map(|(f, p)| antisymmetric_potential(p, f)).collect();
        Self { psi, omega, label: "plane-waves".into() }
    }

    pub fn grid(&self) -> Grid3 {
        self.psi[0].grid
    }

    pub fn psi_sq_minus_one(&self, f: usize) -> ScalarField3 {
        let mut s = self.psi[f].mul_collocated(&self.psi[f]);
        s.add_constant(-1.0);
        s
    }

    /// `div_X Omega_f`, the leading velocity profile `psi_f f` up to round-off.
    pub fn div_omega(&self, f: usize) -> VectorField3 {
        antisym_div(&self.omega[f])
    }

    fn modes(&self, coeff_tol: f64) -> Result<ProfileModesSet> {
        let mut out = ProfileModesSet { psi: vec![], omega: vec![], psi_sq: vec![] };
        for f in 0..6 {
            out.psi.push(profile_modes(&self.psi[f], coeff_tol)?);
            let mut om = Vec::new();
            for &(a, b) in &PAIRS {
                om.push(profile_modes(self.omega[f].get(a, b), coeff_tol).ok());
            }
            out.omega.push(om);
            out.psi_sq.push(profile_modes(&self.psi_sq_minus_one(f), coeff_tol).ok());
        }
        Ok(out)
    }
}

struct ProfileModesSet {
    psi: Vec<ProfileModes>,
    /// `None` for an identically vanishing potential entry.
    omega: Vec<Vec<Option<ProfileModes>>>,
    psi_sq: Vec<Option<ProfileModes>>,
}

impl ProfileModesSet {
    fn top(&self) -> i64 {
        let top = |pm: &ProfileModes| pm.modes.iter().flat_map(|(m, _, _)| m.iter().map(|c| c.abs())).max().unwrap_or(0);
        self.psi.iter().map(top).max().unwrap_or(0)
    }
}

/// `(div W)^l = d_j W^{jl}` for an antisymmetric `W`.
fn antisym_div(w: &MatrixField3) -> VectorField3 {
    let grid = w.grid();
    let mut out = VectorField3::zeros(grid);
    for &(j, l) in &PAIRS {
        let e = w.get(j, l);
        out.c[l] += &derivative(e, &[j]).expect("axis");
        out.c[j] -= &derivative(e, &[l]).expect("axis");
    }
    out
}

/// `profile(lambda Gamma(x))` on `grid`.
fn compose<T: Components>(profile: &T, grid: Grid3, lambda: u32, chart: ChartAt) -> T {
    let pg = profile.grid();
    let (n, np) = (grid.n(), pg.n());
    if let ChartAt::Identity = chart {
        if (lambda as usize * np) % n == 0 {
            let s = lambda as usize * np / n;
            let comps = profile
                .components()
                .iter()
                .map(|c| {
                    let data = (0..grid.len())
                        .map(|idx| {
                            let [i, j, k] = grid.unflatten(idx);
                            c.data[pg.index(i * s % np, j * s % np, k * s % np)]
                        })
                        .collect();
                    ScalarField3 { grid, data }
                })
                .collect();
            return T::from_components(comps);
        }
    }
    let lam = lambda as f64;
    let pts: Vec<[f64; 3]> = (0..grid.len())
        .map(|idx| {
            let x = grid.point(idx);
            let g = match chart {
                ChartAt::Identity => [0.0; 3],
                ChartAt::Map { gamma, .. } => gamma.at(idx),
            };
            std::array::from_fn(|a| lam * (x[a] + g[a]))
        })
        .collect();
    TrigSeries::new(profile).eval_field(grid, &pts)
}

/// Pointwise `a (x) b + b (x) a` (or `a (x) a` when `twice` is false).
fn outer_collocated(a: &VectorField3, b: &VectorField3, twice: bool) -> SymTensorField3 {
    let mut out = SymTensorField3::zeros(a.grid());
    for (s, &(j, l)) in SYM_PAIRS.iter().enumerate() {
        let mut x = a.c[j].mul_collocated(&b.c[l]);
        if twice {
            x.axpy(1.0, &b.c[j].mul_collocated(&a.c[l]));
        }
        out.c[s] = x;
    }
    out
}

fn matrix_sup(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// `v . grad w + w . grad v`.
fn advect_pair(v: &VectorField3, dv: &[[ScalarField3; 3]; 3], w: &VectorField3) -> VectorField3 {
    let dw = jacobian(w);
    let mut out = VectorField3::zeros(w.grid());
    for l in 0..3 {
        for i in 0..3 {
            out.c[l] += &v.c[i].mul_collocated(&dw[l][i]);
            out.c[l] += &w.c[i].mul_collocated(&dv[l][i]);
        }
    }
    out
}

fn stencil<T: Components>(vals: &[T], dt: f64) -> T {
    let mut d = T::lincomb(1.0, &vals[0], -8.0, &vals[1]);
    d.axpy(8.0, &vals[3]);
    d.axpy(-1.0, &vals[4]);
    d.scale(1.0 / (12.0 * dt));
    d
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepOptions {
    pub chart: TransportOptions,
    pub osc: OscOptions,
    /// Relative tolerance of the stress cancellation on the plateau.
    pub cancellation_tol: f64,
    /// Also compute `d_t V` independently to measure the step defect.
    pub check_defect: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { chart: TransportOptions::default(), osc: OscOptions::default(), cancellation_tol: 1e-6, check_defect: true }
    }
}

/// Max-over-time sup norms of the correction and the stress terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StressNorms {
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "R_M")]
    pub r_m: f64,
    #[serde(rename = "R_S")]
    pub r_s: f64,
    #[serde(rename = "R_T")]
    pub r_t: f64,
    #[serde(rename = "R_H")]
    pub r_h: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
}

impl StressNorms {
    fn absorb(&mut self, o: &StressNorms) {
        self.v = self.v.max(o.v);
        self.r_m = self.r_m.max(o.r_m);
        self.r_s = self.r_s.max(o.r_s);
        self.r_t = self.r_t.max(o.r_t);
        self.r_h = self.r_h.max(o.r_h);
        self.r1 = self.r1.max(o.r1);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexReport {
    pub index: i64,
    pub t_i: f64,
    pub plateau: f64,
    pub c_delta: f64,
    pub eps_sup: f64,
    pub min_gamma_sq: f64,
    pub chart_min_det: f64,
    /// `max |sum_J v_J (x) v_J - e_I delta + R_eps| / e_I` over the plateau.
    pub cancellation: f64,
    pub reconstruction: f64,
    /// `max |(d_t + v_eps . grad) psi(lambda Gamma)| / max |v_eps . grad psi(lambda Gamma)|`.
    pub advective_defect: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    /// `mean |v_1|^2`.
    pub energy: f64,
    /// `mean |v_tilde|^2 + sum_J mean |v_J|^2`.
    pub predicted: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StepResiduals {
    /// `max_t |d_t V + div(v V + V v + V V) + div R_glued - div R_1| / max_t |d_t V|`.
    pub step_defect: f64,
    /// Finite-difference Euler-Reynolds residual of `(v_1, p_1, R_1)`.
    pub fd_residual: f64,
    /// `max |div v_1| / max |grad V|`.
    pub div_v1: f64,
    /// `max |div R_T - target| / |target|` over the oscillatory solves.
    pub osc_identity: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepReport {
    pub mode: String,
    pub lambda: u32,
    #[serde(rename = "N")]
    pub n_growth: f64,
    pub eps_v: f64,
    #[serde(rename = "eps_R")]
    pub eps_r: f64,
    pub norms: StressNorms,
    pub r0_sup: f64,
    pub target_stress: f64,
    pub residuals: StepResiduals,
    pub energy: Vec<EnergySample>,
    pub indices: Vec<IndexReport>,
}

impl StepReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub struct StepResult {
    pub v1: TimeSampled<VectorField3>,
    pub p1: TimeSampled<ScalarField3>,
    pub r1: TimeSampled<SymTensorField3>,
    pub report: StepReport,
}

/// Amplitude data of one index at one time, without the time cutoff.
struct LowFreq {
    gamma_sq_min: f64,
    /// `gamma_f B f`.
    g: Vec<VectorField3>,
    /// `gamma_f (B_a (x) B_b - B_b (x) B_a)` entries `(j, l)` in [`PAIRS`] order, per pair `(a, b)`.
    c: Vec<[[ScalarField3; 3]; 3]>,
    /// `lambda^{-1} div` of the above.
    d: Vec<[VectorField3; 3]>,
    reconstruction: f64,
}

struct IndexCtx<'a> {
    grid: Grid3,
    lambda: u32,
    chart: &'a crate::flow::FlowChart,
    r_eps: &'a TimeSampled<SymTensorField3>,
    plateau_sq: f64,
}

impl IndexCtx<'_> {
    fn chart_index(&self, t: f64) -> Result<usize> {
        self.chart.gamma.index_of(t).ok_or(Error::WindowOutOfRange {
            lo: t,
            hi: t,
            min: self.chart.gamma.t0,
            max: self.chart.gamma.t_end(),
        })
    }

    fn eps(&self, t: f64) -> SymTensorField3 {
        match self.r_eps.index_of(t) {
            Some(i) => self.r_eps.samples[i].scaled(-1.0 / self.plateau_sq),
            None => SymTensorField3::zeros(self.grid),
        }
    }

    fn low_freq(&self, t: f64) -> Result<LowFreq> {
        let ci = self.chart_index(t)?;
        let grad = &self.chart.grad.samples[ci];
        let inv = &self.chart.grad_inv.samples[ci];
        let eps = self.eps(t);
        let gammas = amplitude_fields(grad, &eps)?;
        let mut reconstruction: f64 = 0.0;
        let mut gamma_sq_min = f64::INFINITY;
        for idx in 0..self.grid.len() {
            let gs: [f64; 6] = std::array::from_fn(|f| gammas[f].data[idx]);
            reconstruction = reconstruction.max(reconstruction_defect(&inv.at(idx), &gs, &eps.at(idx)));
            gamma_sq_min = gamma_sq_min.min(gs.iter().map(|g| g * g).fold(f64::INFINITY, f64::min));
        }
        let (mut gv, mut cv, mut dv) = (vec![], vec![], vec![]);
        for (f, gam) in gammas.iter().enumerate() {
            let fd = dirf(f);
            let mut bf = VectorField3::zeros(self.grid);
            for l in 0..3 {
                for a in 0..3 {
                    bf.c[l].axpy(fd[a], inv.get(l, a));
                }
                bf.c[l] = bf.c[l].mul_collocated(gam);
            }
            gv.push(bf);
            let cs: [[ScalarField3; 3]; 3] = std::array::from_fn(|p| {
                let (al, be) = PAIRS[p];
                std::array::from_fn(|q| {
                    let (j, l) = PAIRS[q];
                    let mut x = inv.get(j, al).mul_collocated(inv.get(l, be));
                    x -= &inv.get(j, be).mul_collocated(inv.get(l, al));
                    x.mul_collocated(gam)
                })
            });
            let ds: [VectorField3; 3] = std::array::from_fn(|p| {
                let mut w = MatrixField3::zeros(self.grid);
                for (q, &(j, l)) in PAIRS.iter().enumerate() {
                    *w.get_mut(j, l) = cs[p][q].clone();
                    *w.get_mut(l, j) = cs[p][q].scaled(-1.0);
                }
                antisym_div(&w).scaled(1.0 / self.lambda as f64)
            });
            cv.push(cs);
            dv.push(ds);
        }
        Ok(LowFreq { gamma_sq_min, g: gv, c: cv, d: dv, reconstruction })
    }

    /// `U = V / e^{1/2}` and the leading parts `psi_f(lambda Gamma) g_f`.
    fn velocity(&self, lf: &LowFreq, profiles: &ProfileSet, t: f64) -> Result<(VectorField3, Vec<VectorField3>)> {
        let ci = self.chart_index(t)?;
        let at = ChartAt::of(self.chart, ci);
        let mut w = MatrixField3::zeros(self.grid);
        let mut lead = Vec::with_capacity(6);
        for f in 0..6 {
            let om: MatrixField3 = compose(&profiles.omega[f], self.grid, self.lambda, at);
            for (p, &(al, be)) in PAIRS.iter().enumerate() {
                let o = om.get(al, be);
                for (q, &(j, l)) in PAIRS.iter().enumerate() {
                    let x = lf.c[f][p][q].mul_collocated(o);
                    w.get_mut(j, l).axpy(1.0 / self.lambda as f64, &x);
                }
            }
            let psi: ScalarField3 = compose(&profiles.psi[f], self.grid, self.lambda, at);
            lead.push(VectorField3::from_components(lf.g[f].c.iter().map(|c| c.mul_collocated(&psi)).collect()));
        }
        for &(j, l) in &PAIRS {
            let x = w.get(j, l).scaled(-1.0);
            *w.get_mut(l, j) = x;
        }
        Ok((antisym_div(&w), lead))
    }
}

/// One convex integration step on the full grid of `glued`.
pub fn convex_step(
    glued: &GluedFlow,
    levels: &FreqEnergyLevels,
    profiles: &ProfileSet,
    params: &StepParams,
    opts: &StepOptions,
) -> Result<StepResult> {
    let v = &glued.tilde_v;
    let grid = v.grid();
    let dt = v.dt;
    let theta = glued.theta;
    if theta / dt + 1e-9 < params.samples_per_theta as f64 {
        return Err(Error::Resolution(format!(
            "step needs {} samples per theta, have {:.2}",
            params.samples_per_theta,
            theta / dt
        )));
    }
    let lambda = params.lambda;
    let pm = profiles.modes(opts.osc.coeff_tol)?;
    let freq = lambda as f64 * pm.top() as f64;
    let limit = grid.nyquist().abs() as f64;
    if freq >= limit {
        return Err(Error::Nyquist { freq, limit });
    }
    if levels.e_r <= 0.0 {
        return Err(Error::InvalidArgument("step needs e_R > 0".into()));
    }
    let log_hxi = levels.hat_xi().ln();
    let v_eps = TimeSampled::new(
        v.t0,
        dt,
        v.samples.par_iter().map(|s| mollify_field(s, params.eps_v, 1)).collect::<Result<Vec<_>>>()?,
    )?;

    let nt = v.len();
    let mut v1 = v.samples.clone();
    let mut p1 = glued.tilde_p.samples.clone();
    let mut r1: Vec<SymTensorField3> = vec![SymTensorField3::zeros(grid); nt];
    let mut predicted: Vec<f64> = v.samples.iter().map(|s| s.mean_square()).collect();
    let mut norms = StressNorms::default();
    let mut resid = StepResiduals::default();
    let mut indices = Vec::new();
    let (mut defect_raw, mut defect_scale) = (0.0f64, 0.0f64);

    for (&i, r_i) in &glued.stresses {
        let t_i = glued.partition.t_of(i);
        let r_eps = TimeSampled::new(
            r_i.t0,
            r_i.dt,
            r_i.samples.par_iter().map(|s| mollify_field(s, params.eps_r, 2)).collect::<Result<Vec<_>>>()?,
        )?;
        let sup = r_eps.sup_norm();
        if sup == 0.0 {
            continue;
        }
        let c_delta = sup / (log_hxi * levels.e_r);
        let cut = energy_cutoff(t_i, theta, levels.e_r, log_hxi, params.k_const, c_delta)?;
        let (lo, hi) = (t_i - theta - 2.0 * dt, t_i + theta + 2.0 * dt);
        if lo < v.t0 - 1e-9 * dt || hi > v.t_end() + 1e-9 * dt {
            return Err(Error::WindowOutOfRange { lo, hi, min: v.t0, max: v.t_end() });
        }
        let anchor = v.index_of(t_i).ok_or(Error::InvalidArgument(format!("t({i}) = {t_i} is not a sample time")))?;
        let back = ((t_i - lo) / dt + 1e-9).floor() as usize;
        let fwd = ((hi - t_i) / dt + 1e-9).floor() as usize;
        let chart = back_to_labels(&v_eps, v.time(anchor), back, fwd, dt, &opts.chart)?;
        let ctx = IndexCtx { grid, lambda, chart: &chart, r_eps: &r_eps, plateau_sq: cut.plateau * cut.plateau };
        let mut rep = IndexReport {
            index: i,
            t_i,
            plateau: cut.plateau,
            c_delta,
            eps_sup: sup / ctx.plateau_sq,
            min_gamma_sq: f64::INFINITY,
            chart_min_det: chart.min_det,
            cancellation: 0.0,
            reconstruction: 0.0,
            advective_defect: 0.0,
        };
        let (s_lo, s_hi) = cut.support();
        for k in 0..nt {
            let t = v.time(k);
            if t <= s_lo || t >= s_hi {
                continue;
            }
            let e_half = cut.value(t);
            if e_half == 0.0 {
                continue;
            }
            let de = cut.dt(t);
            let lfs: Vec<LowFreq> = (-2i32..=2).map(|m| ctx.low_freq(t + m as f64 * dt)).collect::<Result<_>>()?;
            let lf = &lfs[2];
            rep.min_gamma_sq = rep.min_gamma_sq.min(lf.gamma_sq_min);
            rep.reconstruction = rep.reconstruction.max(lf.reconstruction);
            let ve = &v_eps.samples[k];
            let dve = jacobian(ve);
            let at = ChartAt::of(&chart, ctx.chart_index(t)?);

            // transport term
            let mut r_t = SymTensorField3::zeros(grid);
            let mut osc_err: f64 = 0.0;
            for f in 0..6 {
                let gs: Vec<VectorField3> = lfs.iter().map(|l| l.g[f].clone()).collect();
                let mut u = stencil(&gs, dt);
                u.axpy(1.0, &advect_pair(ve, &dve, &lf.g[f]));
                u.scale(e_half);
                u.axpy(de, &lf.g[f]);
                let s = solve_with_modes(&u, &pm.psi[f], lambda, at, opts.osc.order)?;
                osc_err = osc_err.max(crate::osc::identity_error(&s.q, &s.target));
                r_t.axpy(1.0, &s.q);
                for p in 0..3 {
                    let Some(modes) = &pm.omega[f][p] else { continue };
                    let ds: Vec<VectorField3> = lfs.iter().map(|l| l.d[f][p].clone()).collect();
                    let mut u = stencil(&ds, dt);
                    u.axpy(1.0, &advect_pair(ve, &dve, &lf.d[f][p]));
                    u.scale(e_half);
                    u.axpy(de, &lf.d[f][p]);
                    let s = solve_with_modes(&u, modes, lambda, at, opts.osc.order)?;
                    r_t.axpy(1.0, &s.q);
                }
            }
            resid.osc_identity = resid.osc_identity.max(osc_err);

            // high-frequency term
            let e = e_half * e_half;
            let mut r_h = SymTensorField3::zeros(grid);
            for f in 0..6 {
                let Some(modes) = &pm.psi_sq[f] else { continue };
                let u = div_sym(&lf.g[f].outer_self()).scaled(e);
                r_h.axpy(1.0, &solve_with_modes(&u, modes, lambda, at, opts.osc.order)?.q);
            }

            // correction and product terms
            let (u_shape, lead) = ctx.velocity(lf, profiles, t)?;
            let vc = u_shape.scaled(e_half);
            let mut r_s = outer_collocated(&vc, &vc, false);
            for l in &lead {
                r_s.axpy(-e, &outer_collocated(l, l, false));
            }
            let mut dv = v.samples[k].clone();
            dv.axpy(-1.0, ve);
            let mut r_m = outer_collocated(&dv, &vc, true);
            let r_glued = r_i.index_of(t).map(|j| r_i.samples[j].clone());
            if let (Some(rg), Some(j)) = (&r_glued, r_eps.index_of(t)) {
                r_m.axpy(1.0, rg);
                r_m.axpy(-1.0, &r_eps.samples[j]);
            }

            // cancellation on the plateau
            let mut canc = ctx.eps(t).scaled(-ctx.plateau_sq);
            for g in &lf.g {
                canc.axpy(e, &outer_collocated(g, g, false));
            }
            for a in 0..3 {
                canc.get_mut(a, a).add_constant(-e);
            }
            let c_rel = canc.sup_norm() / e;
            rep.cancellation = rep.cancellation.max(c_rel);
            if (cut.value(t) - cut.plateau).abs() <= 1e-12 * cut.plateau && c_rel > opts.cancellation_tol {
                return Err(Error::CheckFailed(format!("stress cancellation {c_rel:.3e} at t = {t:.5} for I = {i}")));
            }

            let mut total = r_t.clone();
            total.axpy(1.0, &r_h);
            total.axpy(1.0, &r_s);
            total.axpy(1.0, &r_m);
            norms.absorb(&StressNorms {
                v: vc.sup_norm(),
                r_m: r_m.sup_norm(),
                r_s: r_s.sup_norm(),
                r_t: r_t.sup_norm(),
                r_h: r_h.sup_norm(),
                r1: total.sup_norm(),
            });
            let gscale = jacobian(&vc).iter().flatten().map(|c| c.max_abs()).fold(0.0, f64::max);
            if gscale > 0.0 {
                resid.div_v1 = resid.div_v1.max(div(&vc).max_abs() / gscale);
            }

            if opts.check_defect {
                let shapes: Vec<VectorField3> = (-2i32..=2)
                    .map(|m| {
                        let tm = t + m as f64 * dt;
                        ctx.velocity(&lfs[(m + 2) as usize], profiles, tm).map(|x| x.0)
                    })
                    .collect::<Result<_>>()?;
                let mut dtv = stencil(&shapes, dt).scaled(e_half);
                dtv.axpy(de, &u_shape);
                let mut prod = outer_collocated(&v.samples[k], &vc, true);
                prod.axpy(1.0, &outer_collocated(&vc, &vc, false));
                let mut d = dtv.clone();
                d.axpy(1.0, &div_sym(&prod));
                if let Some(rg) = &r_glued {
                    d.axpy(1.0, &div_sym(rg));
                }
                let div_total = div_sym(&total);
                d.axpy(-1.0, &div_total);
                defect_raw = defect_raw.max(d.sup_norm());
                defect_scale = defect_scale.max(dtv.sup_norm().max(div_total.sup_norm()));
                // advective derivative of the leading profile
                let psis: Vec<ScalarField3> = [-1i32, 1]
                    .iter()
                    .map(|&m| {
                        let tm = t + m as f64 * dt;
                        ctx.chart_index(tm).map(|ci| compose(&profiles.psi[0], grid, lambda, ChartAt::of(&chart, ci)))
                    })
                    .collect::<Result<_>>()?;
                let psi0: ScalarField3 = compose(&profiles.psi[0], grid, lambda, at);
                let gp = crate::spectral::ops::grad(&psi0);
                let mut adv = ScalarField3::zeros(grid);
                for a in 0..3 {
                    adv += &ve.c[a].mul_collocated(&gp.c[a]);
                }
                let mut dpsi = ScalarField3::lincomb(0.5 / dt, &psis[1], -0.5 / dt, &psis[0]);
                dpsi += &adv;
                if adv.max_abs() > 0.0 {
                    rep.advective_defect = rep.advective_defect.max(dpsi.max_abs() / adv.max_abs());
                }
            }

            v1[k].axpy(1.0, &vc);
            p1[k].add_constant(-e);
            r1[k] = total;
            predicted[k] += lf.g.iter().map(|g| e * g.mean_square()).sum::<f64>();
        }
        if rep.min_gamma_sq.is_infinite() {
            rep.min_gamma_sq = 0.0;
        }
        indices.push(rep);
    }

    if defect_scale > 0.0 {
        resid.step_defect = defect_raw / defect_scale;
    }
    let v1 = TimeSampled::new(v.t0, dt, v1)?;
    let p1 = TimeSampled::new(v.t0, dt, p1)?;
    let r1 = TimeSampled::new(v.t0, dt, r1)?;
    resid.fd_residual = residual_of(&v1, &p1, &r1)?.worst();
    let energy = (0..nt)
        .map(|k| EnergySample { t: v.time(k), energy: v1.samples[k].mean_square(), predicted: predicted[k] })
        .collect();
    let r0_sup = glued.total_stress()?.sup_norm();
    let report = StepReport {
        mode: "full-grid".into(),
        lambda,
        n_growth: params.n_growth,
        eps_v: params.eps_v,
        eps_r: params.eps_r,
        norms,
        r0_sup,
        target_stress: params.target_stress(levels),
        residuals: resid,
        energy,
        indices,
    };
    Ok(StepResult { v1, p1, r1, report })
}

/// `(v, p, R) = (0, 0, -(e(t)/3) delta)`: an exact Euler-Reynolds flow.
pub fn seed_state<F: Fn(f64) -> f64>(
    e: F,
    grid: Grid3,
    t0: f64,
    dt: f64,
    count: usize,
    levels: FreqEnergyLevels,
) -> Result<EulerReynoldsState> {
    if count < 2 || !(dt > 0.0) {
        return Err(Error::InvalidArgument("seed state needs at least two samples and dt > 0".into()));
    }
    let r = TimeSampled::from_fn(t0, dt, count, |t| SymTensorField3::identity(grid, -e(t) / 3.0))?;
    let v = TimeSampled::from_fn(t0, dt, count, |_| VectorField3::zeros(grid))?;
    let p = TimeSampled::from_fn(t0, dt, count, |_| ScalarField3::zeros(grid))?;
    EulerReynoldsState::new(v, p, r, levels, (t0, t0 + dt * (count - 1) as f64))
}

/// Compactly supported energy profile `e(t) = b(t / T) / b(0)` on `(-T, T)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedProfile {
    pub half_width: f64,
}

impl SeedProfile {
    pub fn e(&self, t: f64) -> f64 {
        raw_bump(t / self.half_width) / raw_bump(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    /// Points per side of the period cell.
    pub n: usize,
    pub lambda: u32,
    pub delta: f64,
    pub xi: f64,
    pub half_width: f64,
    pub samples_per_theta: usize,
    pub k_const: f64,
    pub b_lambda: f64,
    /// Grid of the (spatially constant) gluing stage.
    pub coarse_n: usize,
    /// Peak of the prescribed energy profile; zero gives the trivial run.
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n: 64,
            lambda: 16,
            delta: 0.03,
            xi: 3.0,
            half_width: 0.1,
            samples_per_theta: 16,
            k_const: 21.0,
            b_lambda: 1.0,
            coarse_n: 8,
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DemoSample {
    pub t: f64,
    pub energy: f64,
    pub predicted: f64,
    pub r0: f64,
    pub r1: f64,
    pub r_t: f64,
    pub r_s: f64,
    pub div_v1: f64,
    /// Unnormalized; the report divides the maximum by `max_t |d_t V|`.
    pub step_defect: f64,
    pub cancellation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub levels: FreqEnergyLevels,
    pub theta: f64,
    pub step: StepReport,
    /// Energy of `v_1` must vanish outside this interval.
    pub energy_window: (f64, f64),
    pub energy_outside: f64,
    pub energy_min_inside: f64,
    pub energy_max: f64,
    /// Worst `|energy / predicted - 1|` where the prediction exceeds 1% of its peak.
    pub energy_tracking: f64,
    pub glue_residual: f64,
    pub pipe_min_distance: f64,
    pub samples: Vec<DemoSample>,
    pub peak_time: f64,
}

/// Spatial mean of a constant symmetric field, checked for constancy.
fn constant_value(r: &SymTensorField3) -> [[f64; 3]; 3] {
    r.mean()
}

/// Seed state, gluing and one step on the period cell of the correction.
///
/// With `v = 0` and a constant stress the glued stresses are constant, the
/// charts are the identity and every amplitude is constant in space, so
/// `V(x) = sum_f c_f(t) (div Omega_f)(lambda x)`, `R_M = R_H = 0`,
/// `R_T = sum_f c_f'(t) Q_f(lambda x)` with `div Q_f = psi_f(lambda x) f`, and
/// `R_S = V (x) V - sum_f c_f^2 psi_f^2 f (x) f`. If `out` is given the
/// fields at the time of peak energy are written there.
pub fn run_demo(cfg: &DemoConfig, out: Option<&Path>) -> Result<DemoReport> {
    let profile = SeedProfile { half_width: cfg.half_width };
    if !(cfg.half_width > 0.0) || cfg.samples_per_theta < 16 || !(cfg.amplitude >= 0.0) {
        return Err(Error::InvalidArgument(
            "demo needs half_width > 0, amplitude >= 0 and at least 16 samples per theta".into(),
        ));
    }
    let e_r = 1.0 / 3f64.sqrt();
    let levels = FreqEnergyLevels::new(cfg.xi, e_r, e_r)?;
    let theta = choose_theta(&levels, cfg.delta)?;
    let dt = theta / cfg.samples_per_theta as f64;
    let block = 8.0 * theta;
    let a = block * ((-cfg.half_width / block).floor() - 1.0);
    let b = block * ((cfg.half_width / block).ceil() + 1.0);
    let count = ((b - a) / dt).round() as usize + 1;
    let coarse = Grid3::new(cfg.coarse_n)?;
    let state = seed_state(|t| cfg.amplitude * profile.e(t), coarse, a, dt, count, levels)?;
    let glued = glue_flow(&state, theta, &GlueOptions::default())?;
    let glue_residual = glued.residual_semi_analytic(&state.v)?.worst();
    let params = StepParams::from_lambda(&levels, cfg.lambda, cfg.b_lambda)?;
    let lambda = cfg.lambda;
    let log_hxi = levels.hat_xi().ln();

    let cell = Grid3::new(cfg.n)?;
    let fam = PipeFamily::new(cell)?;
    let profiles = ProfileSet::from_family(&fam);
    let vf: Vec<VectorField3> = (0..6).map(|f| profiles.div_omega(f)).collect();
    let qf: Vec<SymTensorField3> =
        (0..6).map(|f| constant_amplitude_antidiv(&profiles.psi[f], dirf(f), lambda)).collect::<Result<_>>()?;
    let vv: Vec<SymTensorField3> = vf.iter().map(|x| outer_collocated(x, x, false)).collect();
    let div_vv: Vec<VectorField3> = vv.iter().map(|x| div_sym(x).scaled(lambda as f64)).collect();
    let div_q: Vec<VectorField3> = qf.iter().map(|x| div_sym(x).scaled(lambda as f64)).collect();

    struct Active {
        index: i64,
        cut: EnergyCutoff,
        r: Vec<[[f64; 3]; 3]>,
        t0: f64,
        r_m: f64,
    }
    let mut active = Vec::new();
    let mut indices = Vec::new();
    for (&i, r_i) in &glued.stresses {
        let r_eps: Vec<SymTensorField3> =
            r_i.samples.iter().map(|s| mollify_field(s, params.eps_r, 2)).collect::<Result<_>>()?;
        let r: Vec<[[f64; 3]; 3]> = r_eps.iter().map(constant_value).collect();
        let r_m = r_i.samples.iter().zip(&r_eps).map(|(x, y)| SymTensorField3::lincomb(1.0, x, -1.0, y).sup_norm()).fold(0.0, f64::max);
        let sup = r.iter().map(matrix_sup).fold(0.0, f64::max);
        if sup == 0.0 {
            continue;
        }
        let c_delta = sup / (log_hxi * levels.e_r);
        let cut = energy_cutoff(glued.partition.t_of(i), theta, levels.e_r, log_hxi, cfg.k_const, c_delta)?;
        indices.push(IndexReport {
            index: i,
            t_i: cut.t_i,
            plateau: cut.plateau,
            c_delta,
            eps_sup: sup / (cut.plateau * cut.plateau),
            min_gamma_sq: f64::INFINITY,
            chart_min_det: 1.0,
            cancellation: 0.0,
            reconstruction: 0.0,
            advective_defect: 0.0,
        });
        active.push(Active { index: i, cut, r, t0: r_i.t0, r_m });
    }
    let stress_at = |act: &Active, t: f64| -> [[f64; 3]; 3] {
        let x = (t - act.t0) / dt;
        let j = x.round();
        if (x - j).abs() > 1e-6 || j < 0.0 || j as usize >= act.r.len() {
            return [[0.0; 3]; 3];
        }
        act.r[j as usize]
    };

    let mut norms = StressNorms::default();
    let mut resid = StepResiduals::default();
    let mut samples = Vec::with_capacity(count);
    let mut energy = Vec::with_capacity(count);
    let mut peak = (0.0, f64::NEG_INFINITY);
    let mut defect_scale = 0.0f64;
    for k in 0..count {
        let t = a + k as f64 * dt;
        let r0 = profile.e(t) / 3f64.sqrt();
        let mut s = DemoSample {
            t,
            energy: 0.0,
            predicted: 0.0,
            r0,
            r1: 0.0,
            r_t: 0.0,
            r_s: 0.0,
            div_v1: 0.0,
            step_defect: 0.0,
            cancellation: 0.0,
        };
        let Some((ai, act)) = active.iter().enumerate().find(|(_, x)| x.cut.value(t) > 0.0) else {
            energy.push(EnergySample { t, energy: 0.0, predicted: 0.0 });
            samples.push(s);
            continue;
        };
        let e_half = act.cut.value(t);
        let de = act.cut.dt(t);
        let ps = act.cut.plateau * act.cut.plateau;
        let r_now = stress_at(act, t);
        let eps: [[f64; 3]; 3] = std::array::from_fn(|j| std::array::from_fn(|l| -r_now[j][l] / ps));
        let gam = amplitude_coeffs(&IDENTITY, &eps)?;
        let rs: Vec<[[f64; 3]; 3]> = (-2i32..=2).map(|m| stress_at(act, t + m as f64 * dt)).collect();
        let r_dot: [[f64; 3]; 3] = std::array::from_fn(|j| {
            std::array::from_fn(|l| (rs[0][j][l] - 8.0 * rs[1][j][l] + 8.0 * rs[3][j][l] - rs[4][j][l]) / (12.0 * dt))
        });
        let eps_dot: [[f64; 3]; 3] = std::array::from_fn(|j| std::array::from_fn(|l| -r_dot[j][l] / ps));
        let dg2 = basis_coefficients(&eps_dot);
        let c: [f64; 6] = std::array::from_fn(|f| e_half * gam[f]);
        let cdot: [f64; 6] = std::array::from_fn(|f| de * gam[f] + e_half * dg2[f] / (2.0 * gam[f]));
        let rep = &mut indices[ai];
        rep.min_gamma_sq = rep.min_gamma_sq.min(gam.iter().map(|g| g * g).fold(f64::INFINITY, f64::min));
        rep.reconstruction = rep.reconstruction.max(reconstruction_defect(&IDENTITY, &gam, &eps));
        let e = e_half * e_half;
        let mut canc = [[0.0; 3]; 3];
        for j in 0..3 {
            for l in 0..3 {
                let d = if j == l { e } else { 0.0 };
                canc[j][l] = (0..6).map(|f| c[f] * c[f] * dirf(f)[j] * dirf(f)[l]).sum::<f64>() - d + r_now[j][l];
            }
        }
        s.cancellation = matrix_sup(&canc) / e;
        rep.cancellation = rep.cancellation.max(s.cancellation);

        let mut vc = VectorField3::zeros(cell);
        let mut r_t = SymTensorField3::zeros(cell);
        let mut lead = SymTensorField3::zeros(cell);
        let mut dtv = VectorField3::zeros(cell);
        let mut defect = VectorField3::zeros(cell);
        for f in 0..6 {
            vc.axpy(c[f], &vf[f]);
            r_t.axpy(cdot[f], &qf[f]);
            lead.axpy(c[f] * c[f], &vv[f]);
            dtv.axpy(cdot[f], &vf[f]);
            defect.axpy(cdot[f], &vf[f]);
            defect.axpy(-cdot[f], &div_q[f]);
            defect.axpy(c[f] * c[f], &div_vv[f]);
        }
        let mut r_s = outer_collocated(&vc, &vc, false);
        r_s.axpy(-1.0, &lead);
        let mut total = r_t.clone();
        total.axpy(1.0, &r_s);
        s.energy = vc.mean_square();
        s.predicted = e * (0..6).map(|f| gam[f] * gam[f] * 2.0).sum::<f64>();
        s.r_t = r_t.sup_norm();
        s.r_s = r_s.sup_norm();
        s.r1 = total.sup_norm();
        let gscale = lambda as f64 * jacobian(&vc).iter().flatten().map(|x| x.max_abs()).fold(0.0, f64::max);
        s.div_v1 = if gscale > 0.0 { lambda as f64 * div(&vc).max_abs() / gscale } else { 0.0 };
        s.step_defect = defect.sup_norm();
        defect_scale = defect_scale.max(dtv.sup_norm());
        norms.absorb(&StressNorms { v: vc.sup_norm(), r_m: act.r_m, r_s: s.r_s, r_t: s.r_t, r_h: 0.0, r1: s.r1 });
        resid.div_v1 = resid.div_v1.max(s.div_v1);
        resid.step_defect = resid.step_defect.max(s.step_defect);
        if s.energy > peak.1 {
            peak = (t, s.energy);
            if let Some(dir) = out {
                std::fs::create_dir_all(dir)?;
                write_f3d(&dir.join("v1_peak.f3d"), &vc.c.iter().collect::<Vec<_>>(), t)?;
                write_f3d(&dir.join("R1_peak.f3d"), &total.c.iter().collect::<Vec<_>>(), t)?;
            }
        }
        let _ = act.index;
        energy.push(EnergySample { t, energy: s.energy, predicted: s.predicted });
        samples.push(s);
    }
    if defect_scale > 0.0 {
        resid.step_defect /= defect_scale;
    }
    for rep in &mut indices {
        if rep.min_gamma_sq.is_infinite() {
            rep.min_gamma_sq = 0.0;
        }
    }

    let reach = 1.0 / (3.0 * levels.xi * levels.e_v.sqrt());
    let window = (-cfg.half_width - reach, cfg.half_width + reach);
    let inside = |t: f64| t > window.0 && t < window.1;
    let energy_outside = samples.iter().filter(|s| !inside(s.t)).map(|s| s.energy).fold(0.0, f64::max);
    let energy_max = samples.iter().map(|s| s.energy).fold(0.0, f64::max);
    let energy_min_inside = samples.iter().filter(|s| inside(s.t)).map(|s| s.energy).fold(f64::INFINITY, f64::min);
    let pmax = samples.iter().map(|s| s.predicted).fold(0.0, f64::max);
    let energy_tracking = samples
        .iter()
        .filter(|s| s.predicted > 0.01 * pmax)
        .map(|s| (s.energy / s.predicted - 1.0).abs())
        .fold(0.0, f64::max);
    let r0_sup = samples.iter().map(|s| s.r0).fold(0.0, f64::max);
    let step = StepReport {
        mode: "cell".into(),
        lambda,
        n_growth: params.n_growth,
        eps_v: params.eps_v,
        eps_r: params.eps_r,
        norms,
        r0_sup,
        target_stress: params.target_stress(&levels),
        residuals: resid,
        energy,
        indices,
    };
    let report = DemoReport {
        config: *cfg,
        levels,
        theta,
        step,
        energy_window: window,
        energy_outside,
        energy_min_inside,
        energy_max,
        energy_tracking,
        glue_residual,
        pipe_min_distance: fam.placement.min_distance,
        samples,
        peak_time: peak.0,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("demo.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

/// Glued stresses by index, for reports.
pub fn stress_sups(glued: &GluedFlow) -> BTreeMap<i64, f64> {
    glued.stresses.iter().map(|(&i, r)| (i, r.sup_norm())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ID: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn identity_gives_one_half() {
        let g = amplitude_coeffs(&ID, &[[0.0; 3]; 3]).unwrap();
        for x in g {
            assert!((x - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn off_diagonal_example() {
        let c = 0.05;
        let eps = [[0.0, c, 0.0], [c, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let g = amplitude_coeffs(&ID, &eps).unwrap();
        let g2 = g.map(|x| x * x);
        assert!((g2[0] - (0.25 + c / 2.0)).abs() < 1e-14);
        assert!((g2[1] - (0.25 - c / 2.0)).abs() < 1e-14);
        for x in &g2[2..] {
            assert!((x - 0.25).abs() < 1e-14);
        }
        assert!(reconstruction_defect(&ID, &g, &eps) < 1e-8);
    }

    #[test]
    fn radicand_guard() {
        let eps = [[0.0, 0.45, 0.0], [0.45, 0.0, 0.0], [0.0, 0.0, 0.0]];
        assert!(matches!(amplitude_coeffs(&ID, &eps), Err(Error::Radicand { .. })));
        let shrink = [[-0.85, 0.0, 0.0], [0.0, -0.85, 0.0], [0.0, 0.0, -0.85]];
        assert!(matches!(amplitude_coeffs(&ID, &shrink), Err(Error::Radicand { .. })));
    }

    #[test]
    fn sheared_chart_reconstructs() {
        let grad = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.05], [0.02, 0.0, 1.0]];
        let inv = nalgebra::Matrix3::from_row_slice(&grad.concat()).try_inverse().unwrap();
        let inv: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)]));
        let eps = [[0.01, -0.02, 0.0], [-0.02, 0.0, 0.01], [0.0, 0.01, -0.01]];
        let g = amplitude_coeffs(&grad, &eps).unwrap();
        assert!(reconstruction_defect(&inv, &g, &eps) < 1e-8);
    }

    #[test]
    fn cutoff_shape() {
        let cut = energy_cutoff(1.0, 0.08, 0.5, 2.0, 21.0, 0.3).unwrap();
        let plateau = (21.0f64 * 0.3 * 2.0 * 0.5).sqrt();
        assert!((cut.value(1.0) - plateau).abs() < 1e-12);
        for t in [1.0 - 0.04, 1.0 + 0.04, 1.0 + 0.049] {
            assert!((cut.value(t) - plateau).abs() < 1e-12);
        }
        assert_eq!(cut.value(1.0 + 0.08), 0.0);
        assert_eq!(cut.value(1.0 - 0.08), 0.0);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..400 {
            let t = 0.9 + 0.2 * k as f64 / 400.0;
            let fd = (cut.value(t + h) - cut.value(t - h)) / (2.0 * h);
            assert!((fd - cut.dt(t)).abs() < 1e-4 * plateau / 0.08);
            worst = worst.max(fd.abs());
        }
        assert!(worst * 0.08 / plateau < 20.0);
        assert!(energy_cutoff(0.0, 0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn plane_wave_profiles() {
        let p = ProfileSet::plane_waves(Grid3::new(8).unwrap());
        for f in 0..6 {
            assert!(p.psi[f].mean().abs() < 1e-14);
            assert!((p.psi[f].mean_square() - 1.0).abs() < 1e-12);
            let lead = p.div_omega(f);
            let fd = dirf(f);
            for a in 0..3 {
                let mut want = p.psi[f].scaled(fd[a]);
                want -= &lead.c[a];
                assert!(want.max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compose_identity_fast_path_matches_series() {
        let p = ProfileSet::plane_waves(Grid3::new(8).unwrap());
        let grid = Grid3::new(16).unwrap();
        let fast: ScalarField3 = compose(&p.psi[0], grid, 2, ChartAt::Identity);
        let zero = VectorField3::zeros(grid);
        let id = MatrixField3::identity(grid);
        let slow: ScalarField3 = compose(&p.psi[0], grid, 2, ChartAt::Map { gamma: &zero, grad: &id });
        let mut d = fast.clone();
        d -= &slow;
        assert!(d.max_abs() < 1e-12);
    }
}
