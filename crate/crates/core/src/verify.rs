//! Invariant suites shared by the command-line `verify` subcommand and the
//! acceptance harness.
//!
//! Each check function returns a list of [`Check`]s. A module error inside a
//! check is reported as a failed check named `error` instead of propagating.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{back_to_labels, transport_elliptic_solve, transport_solve, Forcing, PicardOptions, Scheme, TransportOptions};
use crate::gluing::{choose_theta, glue_flow, GlueOptions, ShearSeed};
use crate::mikado::{det_i64, direction_outer_sum, gram_matrix, stationarity, PipeFamily};
use crate::osc::{identity_error, solve_osc_at, ChartAt, OscOptions};
use crate::scheduler::{
    check_schedule, dominant_eigvec, max_alpha, max_alpha_closed_form, reference_start, support_series_check, t_delta,
    RegParams,
};
use crate::spectral::state::residual_of;
use crate::spectral::testing::random_vector;
use crate::step::{run_demo, DemoConfig};
use crate::{antidiv_r, commutator_defect, div_sym, Components, Grid3, ScalarField3, SymTensorField3, TimeSampled, VectorField3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// Human-readable acceptance condition on `value`.
    pub condition: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, condition: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), passed, value, condition: condition.into(), detail: String::new() }
    }

    /// `value <= bound`, failing on NaN.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, format!("<= {bound:e}"), value <= bound)
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, value, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&value))
    }

    fn error(e: &Error) -> Self {
        Self { detail: e.to_string(), ..Self::new("error", f64::NAN, "no error", false) }
    }

    /// One-line summary for logs.
    pub fn line(&self) -> String {
        let mark = if self.passed { "pass" } else { "FAIL" };
        if self.detail.is_empty() {
            format!("{mark} {} = {:.4e} (want {})", self.name, self.value, self.condition)
        } else {
            format!("{mark} {}: {}", self.name, self.detail)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Spectral,
    Mikado,
    Flow,
    Glue,
    Osc,
    Step,
    Schedule,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::Schedule, Suite::Spectral, Suite::Mikado, Suite::Flow, Suite::Osc, Suite::Glue, Suite::Step];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Spectral => "spectral",
            Suite::Mikado => "mikado",
            Suite::Flow => "flow",
            Suite::Glue => "glue",
            Suite::Osc => "osc",
            Suite::Step => "step",
            Suite::Schedule => "schedule",
        }
    }

    /// Grid used when none is given.
    pub fn default_grid(self) -> usize {
        match self {
            Suite::Spectral | Suite::Flow => 32,
            Suite::Mikado | Suite::Glue | Suite::Step => 64,
            Suite::Osc => 96,
            Suite::Schedule => 0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub grid_n: usize,
    /// Wall-clock time; left out of the JSON so reports stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

/// Run `f`, turning an error into a single failed check.
pub fn guarded(f: impl FnOnce() -> Result<Vec<Check>>) -> Vec<Check> {
    f().unwrap_or_else(|e| vec![Check::error(&e)])
}

/// Run one suite. `grid_n` overrides the suite's default grid.
pub fn run_suite(suite: Suite, grid_n: Option<usize>) -> SuiteReport {
    let n = grid_n.unwrap_or(suite.default_grid());
    let clock = Instant::now();
    let checks = match suite {
        Suite::Schedule => {
            let mut c = scheduler_threshold();
            c.extend(eigen_structure());
            c.extend(guarded(admissibility_run));
            c
        }
        Suite::Mikado => {
            let mut c = direction_identity();
            c.extend(guarded(|| mikado_stationarity(n)));
            c
        }
        Suite::Spectral => {
            let mut c = guarded(|| inverse_divergence(n));
            c.extend(guarded(|| commutator_scaling(n)));
            c
        }
        Suite::Osc => guarded(|| parametrix_gain(n)),
        Suite::Glue => guarded(|| gluing_identities(n)),
        Suite::Step => guarded(|| end_to_end(n, 16)),
        Suite::Flow => guarded(|| transport_solvers(n)),
    };
    SuiteReport { suite, grid_n: n, seconds: clock.elapsed().as_secs_f64(), checks }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// JUnit-style XML with one test case per check.
pub fn junit_xml(reports: &[SuiteReport]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<testsuites>\n");
    for r in reports {
        let failures = r.checks.iter().filter(|c| !c.passed).count();
        out += &format!(
            "  <testsuite name=\"{}\" tests=\"{}\" failures=\"{}\" time=\"{:.3}\">\n",
            r.suite,
            r.checks.len(),
            failures,
            r.seconds
        );
        for c in &r.checks {
            out += &format!("    <testcase classname=\"{}\" name=\"{}\"", r.suite, xml_escape(&c.name));
            if c.passed {
                out += "/>\n";
            } else {
                let msg = if c.detail.is_empty() {
                    format!("value {:e}, expected {}", c.value, c.condition)
                } else {
                    c.detail.clone()
                };
                out += &format!(">\n      <failure message=\"{}\"/>\n    </testcase>\n", xml_escape(&msg));
            }
        }
        out += "  </testsuite>\n";
    }
    out += "</testsuites>\n";
    out
}

pub fn scheduler_threshold() -> Vec<Check> {
    let small = max_alpha(1e-4);
    let mid = max_alpha(0.1);
    let cross = [1e-4, 0.01, 0.1, 0.2, 0.249].iter().map(|&d| (max_alpha(d) - max_alpha_closed_form(d)).abs()).fold(0.0, f64::max);
    vec![
        Check::new("max_alpha(1e-4)", small, "in (0.3332, 1/3)", small > 0.3332 && small < 1.0 / 3.0),
        Check::at_most("|max_alpha(0.1) - 0.27859|", (mid - 0.27859).abs(), 1e-4),
        Check::at_most("|max_alpha(0) - 1/3|", (max_alpha(0.0) - 1.0 / 3.0).abs(), 1e-9),
        Check::at_most("bisection vs closed form", cross, 1e-10),
    ]
}

pub fn eigen_structure() -> Vec<Check> {
    let (mut resid, mut series, mut worst_sign) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for k in 0..100 {
        let d = 0.25 * (k as f64 + 0.5) / 100.0;
        let e = dominant_eigvec(d);
        let t = t_delta(d);
        let psi = [-(1.0 + d / 2.0), d, 1.5 + d];
        let r = (0..3)
            .map(|i| (0..3).map(|j| t[i][j] * psi[j]).sum::<f64>() - (1.0 + d) * psi[i])
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        resid = resid.max(r).max(e.residual);
        let s = support_series_check(d);
        series = series.max((s - (-1.0 - 1.25 * d)).abs());
        worst_sign = worst_sign.max(s);
    }
    vec![
        Check::at_most("eigen residual (100 deltas)", resid, 1e-12),
        Check::at_most("support series - (-1 - 5 delta/4)", series, 1e-14),
        Check::new("support series sign", worst_sign, "< 0", worst_sign < 0.0),
    ]
}

pub fn admissibility_run() -> Result<Vec<Check>> {
    let p = RegParams::new(0.1, 1e6, 1.0)?;
    let ok = check_schedule(&p, &reference_start(), 50);
    let detail = match &ok {
        Ok(()) => "all six flags hold for 50 stages".to_string(),
        Err(e) => e.to_string(),
    };
    Ok(vec![Check::new("admissible stages (Z = 1e6)", if ok.is_ok() { 50.0 } else { 0.0 }, detail, ok.is_ok())])
}

pub fn direction_identity() -> Vec<Check> {
    let s = direction_outer_sum();
    let id_err = (0..3)
        .flat_map(|j| (0..3).map(move |l| (j, l)))
        .map(|(j, l)| (s[j][l] - if j == l { 4 } else { 0 }).abs())
        .max()
        .unwrap_or(0);
    let g: Vec<Vec<i64>> = gram_matrix().iter().map(|r| r.to_vec()).collect();
    let det = det_i64(&g);
    vec![
        Check::new("sum f (x) f / 4 - Id", id_err as f64, "== 0", id_err == 0),
        Check::new("det Gram", det as f64, "!= 0", det != 0),
    ]
}

pub fn mikado_stationarity(n: usize) -> Result<Vec<Check>> {
    let fam = PipeFamily::new(Grid3::new(n)?)?;
    let r = stationarity(&fam, &[0.5; 6]);
    let mean_err = (0..3)
        .flat_map(|j| (0..3).map(move |l| (j, l)))
        .map(|(j, l)| (r.mean_uu[j][l] - if j == l { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    let u2 = r.u_sup * r.u_sup;
    Ok(vec![
        Check::at_most("|div u| / |u|", r.div_u / r.u_sup, 1e-8),
        Check::at_most("|div(u (x) u)| / |u|^2", r.div_uu / u2, 1e-4),
        Check::new("pipe overlap", r.overlap, "== 0", r.overlap == 0.0),
        Check::at_most("|mean(u (x) u) - Id|", mean_err, 1e-3),
    ])
}

pub fn inverse_divergence(n: usize) -> Result<Vec<Check>> {
    let grid = Grid3::new(n)?;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut u = random_vector(grid, (n as i64 / 4).max(2), seed);
        for c in &mut u.c {
            let m = c.mean();
            c.data.iter_mut().for_each(|x| *x -= m);
        }
        let mut d = div_sym(&antidiv_r(&u));
        for a in 0..3 {
            d.c[a].axpy(-1.0, &u.c[a]);
        }
        worst = worst.max(d.sup_norm() / u.sup_norm());
    }
    Ok(vec![Check::at_most("|div R[U] - U| / |U| (20 fields)", worst, 1e-10)])
}

pub fn commutator_scaling(n: usize) -> Result<Vec<Check>> {
    let grid = Grid3::new(n)?;
    let pairs: [(fn([f64; 3]) -> f64, fn([f64; 3]) -> f64); 3] = [
        (|x| (2.0 * PI * x[0]).sin(), |x| (2.0 * PI * x[0]).sin()),
        (|x| (2.0 * PI * x[0]).cos(), |x| (2.0 * PI * (x[0] + x[1])).sin()),
        (|x| (2.0 * PI * x[1]).sin() + 0.5 * (4.0 * PI * x[2]).cos(), |x| (2.0 * PI * (x[2] - x[0])).cos()),
    ];
    let mut out = Vec::new();
    for (k, (f, g)) in pairs.iter().enumerate() {
        let f = ScalarField3::from_fn(grid, f);
        let g = ScalarField3::from_fn(grid, g);
        let a = commutator_defect(&f, &g, 0.05)?.max_abs();
        let b = commutator_defect(&f, &g, 0.025)?.max_abs();
        out.push(Check::within(format!("commutator ratio, pair {k}"), a / b, 3.2, 4.8));
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn parametrix_gain(n: usize) -> Result<Vec<Check>> {
    let grid = Grid3::new(n)?;
    let v = TimeSampled::from_fn(0.0, 0.01, 5, |_| VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0]))?;
    let chart = back_to_labels(&v, 0.0, 0, 4, 0.01, &TransportOptions::default())?;
    let last = chart.gamma.len() - 1;
    let omega = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
    let u = VectorField3::from_fn(grid, |x| [0.5 + (2.0 * PI * x[2]).sin(), (2.0 * PI * x[1]).cos(), 0.3]);
    let lambdas = [8u32, 16, 32];
    let mut out = Vec::new();
    let mut norms = Vec::new();
    for &lam in &lambdas {
        let s = solve_osc_at(&u, &omega, lam, ChartAt::of(&chart, last), &OscOptions::default())?;
        out.push(Check::at_most(format!("identity error, lambda {lam}"), identity_error(&s.q, &s.target), 1e-4));
        norms.push(s.q.sup_norm());
    }
    let x: Vec<f64> = lambdas.iter().map(|&l| l as f64).collect();
    out.push(Check::within("gain exponent beta", -log_slope(&x, &norms), 0.8, 1.2));
    Ok(out)
}

pub fn gluing_identities(n: usize) -> Result<Vec<Check>> {
    let grid = Grid3::new(n)?;
    let seed = ShearSeed::default();
    let levels = seed.levels(grid)?;
    let theta = choose_theta(&levels, 0.03)?;
    let dt = theta / 4.0;
    let state = seed.state(grid, 0.0, dt, 33)?;
    let floor = residual_of(&state.v, &state.p, &state.r)?.worst();
    let g = glue_flow(&state, theta, &GlueOptions::default())?;
    if g.reports.is_empty() {
        return Err(Error::CheckFailed("gluing produced no local pieces".into()));
    }
    let antidiv = g.reports.iter().map(|r| r.antidiv_error).fold(0.0, f64::max);
    let slack = 1e-9 * theta;
    let mut support = 0.0f64;
    for (i, r) in &g.stresses {
        let t = g.t_of_i[i];
        let lo = r.t0;
        let hi = r.time(r.len() - 1);
        support = support.max((t - theta / 2.0 - lo).max(hi - t - theta / 2.0));
    }
    let times: Vec<f64> = g.t_of_i.values().copied().collect();
    let gap = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let semi = g.residual_semi_analytic(&state.v)?.worst();
    Ok(vec![
        Check::at_most("|div r_I - y_I| / |y_I|", antidiv, 1e-3),
        Check::at_most("supp R_I overshoot beyond t(I) +- theta/2", support, slack),
        Check::new("min gap t(I+1) - t(I) over 2 theta", gap / (2.0 * theta), "> 1", gap > 2.0 * theta),
        Check::at_most("glued residual / input floor", semi / floor, 10.0),
    ])
}

pub fn end_to_end(n: usize, lambda: u32) -> Result<Vec<Check>> {
    let cfg = DemoConfig { n, lambda, ..DemoConfig::default() };
    let r = run_demo(&cfg, None)?;
    end_to_end_checks(&r)
}

/// Checks on a finished demo run.
pub fn end_to_end_checks(r: &crate::step::DemoReport) -> Result<Vec<Check>> {
    let r1 = r.step.norms.r1;
    let r0 = r.step.r0_sup;
    let energy_min = r.samples.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
    Ok(vec![
        Check::at_most("div v1 (relative)", r.step.residuals.div_v1, 1e-10),
        Check::new("|R1| / |R0|", r1 / r0, "< 1", r1 < r0),
        Check::new("energy range", r.energy_max - energy_min, "> 0", r.energy_max > energy_min),
        Check::new("energy outside window", r.energy_outside, "== 0", r.energy_outside == 0.0),
        Check::at_most("step defect", r.step.residuals.step_defect, 1e-6),
    ])
}

pub fn transport_solvers(n: usize) -> Result<Vec<Check>> {
    let grid = Grid3::new(n)?;
    let max_err = |a: &ScalarField3, b: &ScalarField3| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let schemes = [TransportOptions::default(), TransportOptions { scheme: Scheme::Eulerian, ..Default::default() }];
    let mut out = Vec::new();
    for opts in schemes {
        let tag = match opts.scheme {
            Scheme::SemiLagrangian => "semi-Lagrangian",
            Scheme::Eulerian => "Eulerian",
        };
        let f0 = ScalarField3::from_fn(grid, |x| (2.0 * PI * (x[0] + x[1])).cos() + (4.0 * PI * x[2]).sin());

        let zero = TimeSampled::from_fn(0.0, 0.025, 9, |_| VectorField3::zeros(grid))?;
        let f = transport_solve::<ScalarField3>(&zero, None, &f0, 0.0, 0.2, 8, &opts)?;
        out.push(Check::at_most(format!("{tag}: zero velocity"), max_err(f.samples.last().unwrap(), &f0), 1e-6));

        let c = [0.3, -0.2, 0.5];
        let cv = TimeSampled::from_fn(0.0, 0.025, 9, |_| VectorField3::constant(grid, c))?;
        let f = transport_solve::<ScalarField3>(&cv, None, &f0, 0.0, 0.2, 8, &opts)?;
        let want = ScalarField3::from_fn(grid, |x| {
            let y = [x[0] - 0.2 * c[0], x[1] - 0.2 * c[1], x[2] - 0.2 * c[2]];
            (2.0 * PI * (y[0] + y[1])).cos() + (4.0 * PI * y[2]).sin()
        });
        out.push(Check::at_most(format!("{tag}: constant velocity"), max_err(f.samples.last().unwrap(), &want), 1e-6));

        let sv = TimeSampled::from_fn(0.0, 0.0125, 9, |_| {
            VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0])
        })?;
        let g0 = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
        let f = transport_solve::<ScalarField3>(&sv, None, &g0, 0.0, 0.1, 8, &opts)?;
        let want = ScalarField3::from_fn(grid, |x| (2.0 * PI * (x[0] - 0.1 * (2.0 * PI * x[1]).sin())).cos());
        out.push(Check::at_most(format!("{tag}: shear"), max_err(f.samples.last().unwrap(), &want), 1e-6));
    }

    let pg = Grid3::new(16)?;
    let v = TimeSampled::from_fn(0.0, 0.01, 11, |_| VectorField3::from_fn(pg, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0]))?;
    let zf = VectorField3::from_fn(pg, |x| [(2.0 * PI * x[2]).cos(), (2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).cos()]);
    let z = TimeSampled::from_fn(0.0, 0.01, 11, |_| zf.clone())?;
    let rho0 = SymTensorField3::zeros(pg);
    let r = transport_elliptic_solve(&v, Some(&z as &dyn Forcing<VectorField3>), &rho0, 0.0, 0.1, 10, &PicardOptions::default())?;
    let factor = r.factors.iter().copied().fold(0.0, f64::max);
    out.push(Check::at_most("Picard contraction factor", factor, 0.5));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_roundtrip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn schedule_suite_passes() {
        let r = run_suite(Suite::Schedule, None);
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn errors_become_failures() {
        let r = run_suite(Suite::Spectral, Some(7));
        assert!(!r.passed());
        assert_eq!(r.checks[0].name, "error");
        let xml = junit_xml(&[r]);
        assert!(xml.contains("<failure"));
    }
}
