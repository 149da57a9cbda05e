//! Frequency-energy parameter evolution across iteration stages.
//!
//! All quantities are carried as natural logarithms so that hundreds of
//! stages can be evolved without overflow.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub delta: f64,
    pub eps: f64,
    pub eta: f64,
    pub r: f64,
    pub z: f64,
    pub c_eta: f64,
}

impl RegParams {
    /// Derived parameters `eps = delta/2`, `eta = delta/32`, `r = 20/delta^2`.
    pub fn new(delta: f64, z: f64, c_eta: f64) -> Result<Self> {
        if !(0.0..0.25).contains(&delta) {
            return Err(Error::InvalidArgument(format!("delta = {delta} outside [0, 1/4)")));
        }
        if !(z >= 1.0) || !(c_eta >= 1.0) {
            return Err(Error::InvalidArgument(format!("need Z >= 1 and C_eta >= 1, got {z}, {c_eta}")));
        }
        let r = if delta > 0.0 { 20.0 / (delta * delta) } else { f64::INFINITY };
        Ok(Self { delta, eps: delta / 2.0, eta: delta / 32.0, r, z, c_eta })
    }
}

/// `(Xi, e_v, e_R)` at stage `k`, stored as logarithms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub log_xi: f64,
    pub log_ev: f64,
    pub log_er: f64,
    pub k: usize,
}

impl ParamState {
    pub fn new(xi: f64, e_v: f64, e_r: f64) -> Result<Self> {
        if !(xi > 1.0) || !(e_r > 0.0) || !(e_v >= e_r) {
            return Err(Error::InvalidArgument(format!(
                "need Xi > 1 and e_v >= e_R > 0, got ({xi}, {e_v}, {e_r})"
            )));
        }
        Ok(Self { log_xi: xi.ln(), log_ev: e_v.ln(), log_er: e_r.ln(), k: 0 })
    }

    pub fn from_logs(log_xi: f64, log_ev: f64, log_er: f64) -> Result<Self> {
        if !(log_xi > 0.0) || !(log_ev >= log_er) || !log_er.is_finite() {
            return Err(Error::InvalidArgument("need log Xi > 0 and log e_v >= log e_R".into()));
        }
        Ok(Self { log_xi, log_ev, log_er, k: 0 })
    }

    pub fn xi(&self) -> f64 {
        self.log_xi.exp()
    }

    pub fn e_v(&self) -> f64 {
        self.log_ev.exp()
    }

    pub fn e_r(&self) -> f64 {
        self.log_er.exp()
    }

    /// `log(e_v / e_R)`.
    pub fn log_ratio(&self) -> f64 {
        self.log_ev - self.log_er
    }

    /// `log hat_xi = log Xi + log(e_v/e_R)/2`.
    pub fn log_hat_xi(&self) -> f64 {
        self.log_xi + 0.5 * self.log_ratio()
    }

    /// `(log e_R, log(e_v/e_R), log Xi)`.
    pub fn psi(&self) -> [f64; 3] {
        [self.log_er, self.log_ratio(), self.log_xi]
    }
}

/// One evolution stage.
pub fn evolve(s: &ParamState, p: &RegParams) -> ParamState {
    let l = s.log_ratio();
    let lz = p.z.ln();
    let log_xi = p.c_eta.ln() + lz + (0.5 + 2.5 * p.eps) * l - p.delta * s.log_er + s.log_xi;
    let log_ev = p.eps * l + s.log_er;
    let log_er = (1.0 + p.delta) * s.log_er - lz;
    ParamState { log_xi, log_ev, log_er, k: s.k + 1 }
}

/// `log N = log Z + (5/2) log log hat_xi + log(e_v/e_R)/2 - delta log e_R`.
pub fn log_n_of_k(s: &ParamState, p: &RegParams) -> f64 {
    p.z.ln() + 2.5 * s.log_hat_xi().ln() + 0.5 * s.log_ratio() - p.delta * s.log_er
}

pub fn n_of_k(s: &ParamState, p: &RegParams) -> f64 {
    log_n_of_k(s, p).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub holds: bool,
    /// `log(rhs) - log(lhs)`; nonnegative exactly when the inequality holds.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub items: Vec<Inequality>,
}

impl Admissibility {
    pub fn all(&self) -> bool {
        self.items.iter().all(|i| i.holds)
    }

    pub fn first_failure(&self) -> Option<&Inequality> {
        self.items.iter().find(|i| !i.holds)
    }

    pub fn flags_string(&self) -> String {
        self.items.iter().map(|i| if i.holds { '1' } else { '0' }).collect()
    }
}

pub const FLAG_NAMES: [&str; 6] = ["logReq", "secondReq", "thirdReq", "etaReq", "ratioGrowth", "Nkbound"];

pub fn admissibility(s: &ParamState, p: &RegParams) -> Admissibility {
    let l = s.log_ratio();
    let lh = s.log_hat_xi();
    let lz = p.z.ln();
    let (d, e, eta, r) = (p.delta, p.eps, p.eta, p.r);
    let log_log_h = if lh > 0.0 { lh.ln() } else { f64::NEG_INFINITY };
    let second = if r.is_finite() { -r * r.ln() + r * e * l - lh } else { f64::NEG_INFINITY };
    let third = if r.is_finite() { -(d * r * e / 4.0 * s.log_er + s.log_xi) } else { -s.log_xi };
    let margins = [
        e * l - log_log_h,
        second,
        third,
        -(eta * s.log_xi - 0.5 * l + d * s.log_er),
        0.5 * lz - 0.5 * d * s.log_er - 0.5 * l,
        log_n_of_k(s, p) - eta * s.log_xi,
    ];
    Admissibility {
        items: FLAG_NAMES
            .iter()
            .zip(margins)
            .map(|(&name, margin)| Inequality { name: name.to_string(), holds: margin >= 0.0, margin })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub t_delta: [[f64; 3]; 3],
    pub psi_plus: [f64; 3],
    pub eigenvalues: [f64; 3],
    pub residual: f64,
}

/// Lower-triangular matrix of the log-linear recursion on `(log e_R, log(e_v/e_R), log Xi)`.
pub fn t_delta(delta: f64) -> [[f64; 3]; 3] {
    let eps = delta / 2.0;
    [[1.0 + delta, 0.0, 0.0], [-delta, eps, 0.0], [-delta, 0.5 + eps, 1.0]]
}

pub fn dominant_eigvec(delta: f64) -> EigenData {
    let t = t_delta(delta);
    let psi = [-(1.0 + delta / 2.0), delta, 1.5 + delta];
    let lam = 1.0 + delta;
    let residual = (0..3)
        .map(|i| {
            let row: f64 = (0..3).map(|j| t[i][j] * psi[j]).sum();
            (row - lam * psi[i]).abs()
        })
        .fold(0.0, f64::max);
    EigenData { t_delta: t, psi_plus: psi, eigenvalues: [1.0 + delta, delta / 2.0, 1.0], residual }
}

/// `[1/2 - delta alpha, 1/2, alpha] . psi_plus`; negative iff `alpha` is admissible.
pub fn regularity_lhs(alpha: f64, delta: f64) -> f64 {
    -(0.5 - delta * alpha) * (1.0 + delta / 2.0) + delta / 2.0 + alpha * (1.5 + delta)
}

/// Root of [`regularity_lhs`] in `alpha` by bisection on `[1e-6, 0.34]`.
pub fn max_alpha(delta: f64) -> f64 {
    let (mut lo, mut hi) = (1e-6, 0.34);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if regularity_lhs(mid, delta) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed form of the root, used as an independent cross-check.
pub fn max_alpha_closed_form(delta: f64) -> f64 {
    (0.5 * (1.0 + delta / 2.0) - delta / 2.0) / (delta * (1.0 + delta / 2.0) + 1.5 + delta)
}

/// `[-1/2, -1/2, -1] . psi_plus`, equal to `-1 - 5 delta / 4`.
pub fn support_series_check(delta: f64) -> f64 {
    let psi = dominant_eigvec(delta).psi_plus;
    -0.5 * psi[0] - 0.5 * psi[1] - psi[2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub k: usize,
    pub log_xi: f64,
    pub log_ev: f64,
    pub log_er: f64,
    pub log_n: f64,
    pub flags: String,
    pub all_admissible: bool,
    pub log_e_alpha: f64,
    pub c_plus: f64,
    pub support_increment: f64,
    pub support_partial_sum: f64,
    pub log_support_increment: f64,
    pub log_support_partial_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub alpha: f64,
    pub delta: f64,
    pub stages: Vec<StageRecord>,
    pub psi_plus_pairing: f64,
    pub support_check: f64,
    pub support_series_total: f64,
    pub log_support_series_total: f64,
    pub u_plus: f64,
}

/// Evolve `k_max` stages from `state0`, recording log-bounds and support increments.
pub fn decay_profile(alpha: f64, p: &RegParams, state0: &ParamState, k_max: usize) -> DecayProfile {
    let d = p.delta;
    let w = [0.5 - d * alpha, 0.5, alpha];
    let eig = dominant_eigvec(d);
    let mut s = *state0;
    let mut stages = Vec::with_capacity(k_max + 1);
    let mut partial = 0.0;
    let mut log_partial = f64::NEG_INFINITY;
    for k in 0..=k_max {
        let psi = s.psi();
        let log_inc = -(s.log_xi + 0.5 * s.log_ev);
        let inc = log_inc.exp();
        partial += inc;
        log_partial = log_add_exp(log_partial, log_inc);
        let adm = admissibility(&s, p);
        stages.push(StageRecord {
            k,
            log_xi: s.log_xi,
            log_ev: s.log_ev,
            log_er: s.log_er,
            log_n: log_n_of_k(&s, p),
            flags: adm.flags_string(),
            all_admissible: adm.all(),
            log_e_alpha: (0..3).map(|i| w[i] * psi[i]).sum(),
            c_plus: -s.log_er / (1.0 + d / 2.0),
            support_increment: inc,
            support_partial_sum: partial,
            log_support_increment: log_inc,
            log_support_partial_sum: log_partial,
        });
        if k < k_max {
            s = evolve(&s, p);
        }
    }
    DecayProfile {
        alpha,
        delta: d,
        psi_plus_pairing: (0..3).map(|i| w[i] * eig.psi_plus[i]).sum(),
        support_check: support_series_check(d),
        support_series_total: partial,
        log_support_series_total: log_partial,
        u_plus: p.z.ln() / (1.0 + d / 2.0),
        stages,
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Run `k_max` stages and return the first inadmissible stage, if any.
pub fn check_schedule(p: &RegParams, state0: &ParamState, k_max: usize) -> Result<()> {
    let mut s = *state0;
    for k in 0..=k_max {
        let adm = admissibility(&s, p);
        if let Some(f) = adm.first_failure() {
            return Err(Error::Inadmissible { stage: k, inequality: f.name.clone(), margin: f.margin });
        }
        s = evolve(&s, p);
    }
    Ok(())
}

pub fn write_schedule_csv<W: Write>(profile: &DecayProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k", "log_Xi", "log_ev", "log_eR", "log_N"];
    header.extend(FLAG_NAMES);
    header.extend(["log_E_alpha", "support_increment", "log_support_increment"]);
    w.write_record(&header)?;
    for s in &profile.stages {
        let mut rec = vec![
            s.k.to_string(),
            format!("{:.12e}", s.log_xi),
            format!("{:.12e}", s.log_ev),
            format!("{:.12e}", s.log_er),
            format!("{:.12e}", s.log_n),
        ];
        rec.extend(s.flags.chars().map(|c| if c == '1' { "true".to_string() } else { "false".to_string() }));
        rec.push(format!("{:.12e}", s.log_e_alpha));
        rec.push(format!("{:.12e}", s.support_increment));
        rec.push(format!("{:.12e}", s.log_support_increment));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Start used by the demos and tests: admissible for `delta = 0.1`, `Z = 10^6`.
pub fn reference_start() -> ParamState {
    ParamState { log_xi: 10.0, log_ev: -4800.0, log_er: -5000.0, k: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_parameters() {
        let p = RegParams::new(0.1, 10.0, 1.0).unwrap();
        assert_eq!(p.eps, 0.05);
        assert_eq!(p.eta, 0.1 / 32.0);
        assert!((p.r - 2000.0).abs() < 1e-9);
        assert!(RegParams::new(0.3, 10.0, 1.0).is_err());
    }

    #[test]
    fn evolve_example() {
        let p = RegParams::new(0.2, 10.0, 1.0).unwrap();
        let s = evolve(&ParamState::new(10.0, 1.0, 0.01).unwrap(), &p);
        assert!((s.xi() - 7943.28).abs() / 7943.28 < 1e-6);
        assert!((s.e_v() - 0.0158489).abs() / 0.0158489 < 1e-5);
        assert!((s.e_r() - 3.98107e-4).abs() / 3.98107e-4 < 1e-5);
        assert_eq!(s.k, 1);
    }

    #[test]
    fn evolve_equal_energies() {
        let p = RegParams::new(0.2, 10.0, 1.0).unwrap();
        let s = evolve(&ParamState::new(10.0, 0.5, 0.5).unwrap(), &p);
        assert!((s.log_ev - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn evolve_degenerate_identity() {
        let p = RegParams::new(0.0, 1.0, 1.0).unwrap();
        let s0 = ParamState::new(7.0, 1.0, 1.0).unwrap();
        let s = evolve(&s0, &p);
        assert!((s.log_xi - s0.log_xi).abs() < 1e-14);
        assert!(s.log_er.abs() < 1e-14 && s.log_ev.abs() < 1e-14);
    }

    #[test]
    fn n_example_and_linearity() {
        let p = RegParams::new(0.2, 10.0, 1.0).unwrap();
        let s = ParamState::new(10.0, 1.0, 0.01).unwrap();
        let n = n_of_k(&s, &p);
        assert!((n - 1.143e4).abs() / 1.143e4 < 1e-3, "{n}");
        let p2 = RegParams::new(0.2, 20.0, 1.0).unwrap();
        assert!((n_of_k(&s, &p2) / n - 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_req_fails_at_unit_ratio() {
        let p = RegParams::new(0.1, 1e6, 1.0).unwrap();
        let a = admissibility(&ParamState::new(20.0, 0.1, 0.1).unwrap(), &p);
        assert!(!a.items[0].holds);
        assert!(a.items[0].margin < 0.0);
    }

    #[test]
    fn ratio_growth_holds_for_huge_z() {
        let p = RegParams::new(0.1, 1e300, 1.0).unwrap();
        let a = admissibility(&ParamState::new(20.0, 1.0, 0.01).unwrap(), &p);
        assert!(a.items[4].holds);
    }

    #[test]
    fn eigenvector() {
        let e = dominant_eigvec(0.1);
        assert!((e.psi_plus[0] + 1.05).abs() < 1e-15);
        assert!((e.psi_plus[1] - 0.1).abs() < 1e-15);
        assert!((e.psi_plus[2] - 1.6).abs() < 1e-15);
        assert!(e.residual < 1e-12);
        assert_eq!(dominant_eigvec(0.0).psi_plus, [-1.0, 0.0, 1.5]);
    }

    #[test]
    fn regularity_examples() {
        assert!(regularity_lhs(1.0 / 3.0, 0.0).abs() < 1e-15);
        assert!((regularity_lhs(0.2, 0.1) + 0.134).abs() < 1e-12);
        assert!((regularity_lhs(0.3, 0.1) - 0.0365).abs() < 1e-12);
    }

    #[test]
    fn max_alpha_examples() {
        assert!((max_alpha(0.0) - 1.0 / 3.0).abs() < 1e-9);
        assert!((max_alpha(0.1) - 0.27859).abs() < 1e-4);
        let a = max_alpha(0.01);
        assert!(a < 1.0 / 3.0 && 1.0 / 3.0 - a < 1e-2);
        assert!((max_alpha(0.1) - max_alpha_closed_form(0.1)).abs() < 1e-10);
    }

    #[test]
    fn support_check_value() {
        assert!((support_series_check(0.0) + 1.0).abs() < 1e-15);
        assert!((support_series_check(0.1) + 1.125).abs() < 1e-14);
    }

    #[test]
    fn c_plus_recursion() {
        let p = RegParams::new(0.1, 1e6, 1.0).unwrap();
        let prof = decay_profile(0.25, &p, &reference_start(), 20);
        for w in prof.stages.windows(2) {
            let pred = prof.u_plus + (1.0 + p.delta) * w[0].c_plus;
            assert!((pred - w[1].c_plus).abs() < 1e-10 * w[1].c_plus.abs());
        }
    }

    #[test]
    fn log_e_alpha_decays_double_exponentially() {
        let p = RegParams::new(0.1, 1e6, 1.0).unwrap();
        let prof = decay_profile(0.9 * max_alpha(0.1), &p, &reference_start(), 30);
        let e: Vec<f64> = prof.stages.iter().map(|s| s.log_e_alpha).collect();
        let d1: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
        let d2: Vec<f64> = d1.windows(2).map(|w| w[1] - w[0]).collect();
        let from = d1.iter().position(|&x| x < 0.0).unwrap();
        assert!(from < 20);
        assert!(d1[from..].iter().all(|&x| x < 0.0));
        assert!(d2[from..].iter().all(|&x| x < 0.0));
        // after the transient the decrease accelerates geometrically
        assert!(d2[from + 3..].windows(2).all(|w| w[1].abs() > w[0].abs()));
        assert!(prof.psi_plus_pairing < 0.0);
    }

    #[test]
    fn support_series_tail_is_negligible() {
        let p = RegParams::new(0.1, 1e6, 1.0).unwrap();
        let prof = decay_profile(0.25, &p, &reference_start(), 30);
        let total = prof.log_support_series_total;
        let at10 = prof.stages[10].log_support_partial_sum;
        // tail / total = 1 - exp(at10 - total)
        let tail = -(at10 - total).exp_m1();
        assert!(tail < 1e-3, "{tail}");
        assert!(total.is_finite());
        assert!((log_add_exp(2f64.ln(), 3f64.ln()) - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn reference_start_is_admissible() {
        let p = RegParams::new(0.1, 1e6, 1.0).unwrap();
        check_schedule(&p, &reference_start(), 50).unwrap();
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = RegParams::new(0.1, 1e6, 1.0).unwrap();
        let prof = decay_profile(0.2, &p, &reference_start(), 3);
        let mut buf = Vec::new();
        write_schedule_csv(&prof, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("k,log_Xi,log_ev,log_eR,log_N,logReq"));
    }
}
