use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use onsager_core::mikado::{place_pipes, stationarity, PipeFamily};
use onsager_core::scheduler::{check_schedule, decay_profile, dominant_eigvec, max_alpha, write_schedule_csv, ParamState, RegParams};
use onsager_core::step::{run_demo, DemoConfig, DemoReport};
use onsager_core::verify::{end_to_end_checks, junit_xml, run_suite, Check, Suite, SuiteReport};
use onsager_core::{Error, Grid3};

/// A failed validation or invariant; maps to exit code 2.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "onsager", version, about = "Scheduling reports, demo runs and invariant checks")]
struct Cli {
    #[command(flatten)]
    over: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Cmd {
    /// Evolve the frequency-energy parameters and check admissibility.
    Schedule,
    /// Seed, glue and one convex integration step.
    Demo,
    /// Run invariant suites.
    Verify,
    /// Generate a pipe family and check stationarity.
    Mikado,
}

/// Flags override values from `--config`.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<u32>,
    /// Schedule stages, or convex steps for the demo.
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long = "z", global = true)]
    z: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Peak of the demo energy profile.
    #[arg(long, global = true)]
    amplitude: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated suites for `verify`, or `all`.
    #[arg(long, global = true, value_delimiter = ',')]
    suite: Option<Vec<String>>,
    /// Exit with code 2 when a demo invariant fails.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    grid_n: Option<usize>,
    delta: Option<f64>,
    #[serde(rename = "Z")]
    z: f64,
    c_eta: f64,
    lambda: u32,
    b_lambda: f64,
    steps: Option<usize>,
    /// `(log Xi, log e_v, log e_R)` of the first schedule stage.
    start: [f64; 3],
    alpha: Option<f64>,
    xi: f64,
    half_width: f64,
    samples_per_theta: usize,
    k_const: f64,
    coarse_n: usize,
    amplitude: f64,
    seed: u64,
    suites: Vec<String>,
    out: PathBuf,
    strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DemoConfig::default();
        Self {
            grid_n: None,
            delta: None,
            z: 1e6,
            c_eta: 1.0,
            lambda: d.lambda,
            b_lambda: d.b_lambda,
            steps: None,
            start: [10.0, -4800.0, -5000.0],
            alpha: None,
            xi: d.xi,
            half_width: d.half_width,
            samples_per_theta: d.samples_per_theta,
            k_const: d.k_const,
            coarse_n: d.coarse_n,
            amplitude: d.amplitude,
            seed: onsager_core::mikado::DEFAULT_SEED,
            suites: vec!["all".into()],
            out: PathBuf::from("out"),
            strict: false,
        }
    }
}

impl RunConfig {
    fn load(over: &Overrides) -> anyhow::Result<Self> {
        let mut c: RunConfig = match &over.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = &over.$f { c.$g = Some(v.clone()); })* };
        }
        set!(grid_n => grid_n, delta => delta, steps => steps, alpha => alpha);
        if let Some(v) = over.lambda {
            c.lambda = v;
        }
        if let Some(v) = over.z {
            c.z = v;
        }
        if let Some(v) = over.amplitude {
            c.amplitude = v;
        }
        if let Some(v) = over.seed {
            c.seed = v;
        }
        if let Some(v) = &over.suite {
            c.suites = v.clone();
        }
        if let Some(v) = &over.out {
            c.out = v.clone();
        }
        c.strict |= over.strict;
        Ok(c)
    }

    /// Fill subcommand defaults so the manifest shows what actually ran.
    fn resolve(mut self, cmd: Cmd) -> anyhow::Result<Self> {
        match cmd {
            Cmd::Schedule => {
                self.delta.get_or_insert(0.1);
                self.steps.get_or_insert(50);
                let d = self.delta.unwrap();
                self.alpha.get_or_insert(0.9 * max_alpha(d));
            }
            Cmd::Demo => {
                self.delta.get_or_insert(DemoConfig::default().delta);
                self.steps.get_or_insert(1);
                self.grid_n.get_or_insert(DemoConfig::default().n);
                check_grid(self.grid_n.unwrap())?;
                if self.steps != Some(1) {
                    return Err(invalid(format!("the demo performs exactly one step, got --steps {}", self.steps.unwrap())));
                }
            }
            Cmd::Mikado => {
                self.grid_n.get_or_insert(64);
                check_grid(self.grid_n.unwrap())?;
            }
            Cmd::Verify => {}
        }
        if let Some(d) = self.delta {
            let lo_ok = if matches!(cmd, Cmd::Schedule) { d >= 0.0 } else { d > 0.0 };
            if !(lo_ok && d < 0.25) {
                return Err(invalid(format!("delta = {d} outside (0, 1/4)")));
            }
        }
        Ok(self)
    }
}

fn check_grid(n: usize) -> anyhow::Result<()> {
    if n < 16 || n % 2 != 0 {
        return Err(invalid(format!("grid_n = {n} must be even and at least 16")));
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: Cmd,
    version: &'static str,
    config: &'a RunConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn schedule(c: &RunConfig) -> anyhow::Result<()> {
    let delta = c.delta.unwrap();
    let k_max = c.steps.unwrap();
    let p = RegParams::new(delta, c.z, c.c_eta)?;
    let s0 = ParamState::from_logs(c.start[0], c.start[1], c.start[2])?;
    let profile = decay_profile(c.alpha.unwrap(), &p, &s0, k_max);
    write_schedule_csv(&profile, fs::File::create(c.out.join("schedule.csv"))?)?;
    let verdict = check_schedule(&p, &s0, k_max);
    #[derive(Serialize)]
    struct Summary {
        delta: f64,
        alpha: f64,
        max_alpha: f64,
        psi_plus: [f64; 3],
        support_series_total: f64,
        log_support_series_total: f64,
        stages: usize,
        admissible: bool,
        first_failure: Option<String>,
    }
    let summary = Summary {
        delta,
        alpha: profile.alpha,
        max_alpha: max_alpha(delta),
        psi_plus: dominant_eigvec(delta).psi_plus,
        support_series_total: profile.support_series_total,
        log_support_series_total: profile.log_support_series_total,
        stages: k_max,
        admissible: verdict.is_ok(),
        first_failure: verdict.as_ref().err().map(|e| e.to_string()),
    };
    write_json(&c.out.join("schedule.json"), &summary)?;
    println!("max_alpha({delta}) = {:.6}", summary.max_alpha);
    verdict?;
    println!("all {k_max} stages admissible");
    Ok(())
}

fn demo(c: &RunConfig) -> anyhow::Result<()> {
    let cfg = DemoConfig {
        n: c.grid_n.unwrap(),
        lambda: c.lambda,
        delta: c.delta.unwrap(),
        xi: c.xi,
        half_width: c.half_width,
        samples_per_theta: c.samples_per_theta,
        k_const: c.k_const,
        b_lambda: c.b_lambda,
        coarse_n: c.coarse_n,
        amplitude: c.amplitude,
    };
    let r = run_demo(&cfg, Some(&c.out))?;
    write_demo_csv(&r, &c.out)?;
    let checks = end_to_end_checks(&r)?;
    let stress_ratio = if r.step.r0_sup > 0.0 { r.step.norms.r1 / r.step.r0_sup } else { 0.0 };
    #[derive(Serialize)]
    struct Summary<'a> {
        stress_ratio: f64,
        r0_sup: f64,
        r1_sup: f64,
        theta: f64,
        energy_window: (f64, f64),
        energy_max: f64,
        energy_outside: f64,
        peak_time: f64,
        checks: &'a [Check],
    }
    let summary = Summary {
        stress_ratio,
        r0_sup: r.step.r0_sup,
        r1_sup: r.step.norms.r1,
        theta: r.theta,
        energy_window: r.energy_window,
        energy_max: r.energy_max,
        energy_outside: r.energy_outside,
        peak_time: r.peak_time,
        checks: &checks,
    };
    write_json(&c.out.join("summary.json"), &summary)?;
    println!("theta = {:.4e}, |R1|/|R0| = {stress_ratio:.4e}, peak energy {:.4e}", r.theta, r.energy_max);
    let failed: Vec<&str> = checks.iter().filter(|k| !k.passed).map(|k| k.name.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("demo invariants not met: {}", failed.join(", "));
        if c.strict {
            return Err(invalid("demo invariants failed"));
        }
    }
    Ok(())
}

fn write_demo_csv(r: &DemoReport, dir: &Path) -> anyhow::Result<()> {
    let mut e = csv::Writer::from_path(dir.join("energy.csv"))?;
    e.write_record(["t", "energy", "predicted"])?;
    for s in &r.samples {
        e.write_record([format!("{:.12e}", s.t), format!("{:.12e}", s.energy), format!("{:.12e}", s.predicted)])?;
    }
    e.flush()?;
    let mut w = csv::Writer::from_path(dir.join("residuals.csv"))?;
    w.write_record(["t", "R0", "R1", "R_T", "R_S", "div_v1", "step_defect", "cancellation"])?;
    for s in &r.samples {
        let row = [s.t, s.r0, s.r1, s.r_t, s.r_s, s.div_v1, s.step_defect, s.cancellation];
        w.write_record(row.iter().map(|x| format!("{x:.12e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn verify(c: &RunConfig) -> anyhow::Result<()> {
    let suites: Vec<Suite> = if c.suites.iter().any(|s| s == "all") {
        Suite::ALL.to_vec()
    } else {
        c.suites.iter().map(|s| s.parse::<Suite>()).collect::<Result<_, _>>()?
    };
    let mut reports: Vec<SuiteReport> = Vec::new();
    for s in suites {
        let r = run_suite(s, c.grid_n);
        for k in &r.checks {
            println!("{s}: {}", k.line());
        }
        reports.push(r);
    }
    write_json(&c.out.join("verify.json"), &reports)?;
    fs::write(c.out.join("verify.xml"), junit_xml(&reports))?;
    let failed = reports.iter().filter(|r| !r.passed()).map(|r| r.suite.name()).collect::<Vec<_>>();
    if !failed.is_empty() {
        return Err(invalid(format!("failing suites: {}", failed.join(", "))));
    }
    Ok(())
}

fn mikado(c: &RunConfig) -> anyhow::Result<()> {
    let grid = Grid3::new(c.grid_n.unwrap())?;
    let fam = PipeFamily::build(grid, place_pipes(1000, c.seed)?)?;
    fam.write(&c.out)?;
    let r = stationarity(&fam, &[0.5; 6]);
    let mut checks = onsager_core::verify::direction_identity();
    let u2 = r.u_sup * r.u_sup;
    checks.push(Check::at_most("|div u| / |u|", r.div_u / r.u_sup, 1e-8));
    checks.push(Check::at_most("|div(u (x) u)| / |u|^2", r.div_uu / u2, 1e-4));
    checks.push(Check::new("pipe overlap", r.overlap, "== 0", r.overlap == 0.0));
    write_json(&c.out.join("mikado.json"), &serde_json::json!({ "r0": fam.r0(), "stationarity": r, "checks": checks }))?;
    println!("r0 = {:.5}, |div u| = {:.3e}, |div(u u)| = {:.3e}", fam.r0(), r.div_u, r.div_uu);
    if checks.iter().any(|k| !k.passed) {
        return Err(invalid("pipe family fails stationarity"));
    }
    Ok(())
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ONSAGER_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| invalid(format!("ONSAGER_THREADS = '{v}'")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let cfg = RunConfig::load(&cli.over)?.resolve(cli.cmd)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_json(
        &cfg.out.join("manifest.json"),
        &Manifest { command: cli.cmd, version: env!("CARGO_PKG_VERSION"), config: &cfg },
    )?;
    match cli.cmd {
        Cmd::Schedule => schedule(&cfg),
        Cmd::Demo => demo(&cfg),
        Cmd::Verify => verify(&cfg),
        Cmd::Mikado => mikado(&cfg),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::EulerSolve(_) | Error::NoConvergence { .. }) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
