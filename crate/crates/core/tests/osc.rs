use onsager_core::flow::{back_to_labels, TransportOptions};
use onsager_core::mikado::PipeFamily;
use onsager_core::osc::{constant_amplitude_antidiv, identity_error, solve_osc_at, solve_osc_divergence, ChartAt, OscOptions, OscillatoryRhs};
use onsager_core::{div_sym, Components, Grid3, ScalarField3, TimeSampled, VectorField3};
use std::f64::consts::PI;

fn shear_chart(grid: Grid3) -> onsager_core::flow::FlowChart {
    let v = TimeSampled::from_fn(0.0, 0.01, 5, |_| VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0])).unwrap();
    back_to_labels(&v, 0.0, 0, 4, 0.01, &TransportOptions::default()).unwrap()
}

fn amplitude(grid: Grid3) -> VectorField3 {
    VectorField3::from_fn(grid, |x| [0.5 + (2.0 * PI * x[2]).sin(), (2.0 * PI * x[1]).cos(), 0.3])
}

#[test]
fn low_frequency_amplitude_trivial_chart() {
    let grid = Grid3::new(32).unwrap();
    let omega = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[0]).cos() - 0.4 * (2.0 * PI * (x[1] - x[2])).sin());
    let u = VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0]);
    let s = solve_osc_at(&u, &omega, 4, ChartAt::Identity, &OscOptions::default()).unwrap();
    assert_eq!(s.modes_used, 2);
    assert!(identity_error(&s.q, &s.target) < 1e-6);
}

#[test]
fn shear_chart_gains_lambda() {
    let grid = Grid3::new(48).unwrap();
    let chart = shear_chart(grid);
    let i = chart.gamma.len() - 1;
    let omega = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
    let u = amplitude(grid);
    let norm = |lam: u32| {
        let s = solve_osc_at(&u, &omega, lam, ChartAt::of(&chart, i), &OscOptions::default()).unwrap();
        let e = identity_error(&s.q, &s.target);
        assert!(e < 1e-4, "identity error {e} at lambda {lam}");
        s.q.sup_norm()
    };
    let (a, b) = (norm(4), norm(8));
    let r = b / a;
    assert!((0.35..=0.7).contains(&r), "ratio {r}");
}

#[test]
fn time_sampled_solve_is_bilinear() {
    let grid = Grid3::new(16).unwrap();
    let chart = shear_chart(grid);
    let omega = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
    let omega2 = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[2]).sin());
    let u = TimeSampled::from_fn(0.0, 0.01, 5, |t| amplitude(grid).scaled(1.0 + t)).unwrap();
    let solve = |u: &TimeSampled<VectorField3>, w: &ScalarField3| {
        solve_osc_divergence(&OscillatoryRhs { u, omega: w, lambda: 2, chart: Some(&chart) }, &OscOptions::default()).unwrap()
    };
    let base = solve(&u, &omega);
    assert!(base.identity_error < 1e-4);
    let u3 = TimeSampled::new(u.t0, u.dt, u.samples.iter().map(|s| s.scaled(3.0)).collect()).unwrap();
    let tripled = solve(&u3, &omega);
    let mut sum = omega.clone();
    sum += &omega2;
    let both = solve(&u, &sum);
    let second = solve(&u, &omega2);
    for k in 0..u.len() {
        let d = onsager_core::SymTensorField3::lincomb(3.0, &base.q.samples[k], -1.0, &tripled.q.samples[k]);
        assert!(d.sup_norm() < 1e-12 * tripled.q.sup_norm());
        let mut s = base.q.samples[k].clone();
        s.axpy(1.0, &second.q.samples[k]);
        s.axpy(-1.0, &both.q.samples[k]);
        assert!(s.sup_norm() < 1e-12 * both.q.sup_norm());
    }
}

#[test]
fn pipe_profile_constant_amplitude() {
    let fam = PipeFamily::new(Grid3::new(64).unwrap()).unwrap();
    let psi = &fam.profiles[0];
    let u = [0.4, -0.1, 0.8];
    let lambda = 4;
    let q = constant_amplitude_antidiv(psi, u, lambda).unwrap();
    let mut d = div_sym(&q);
    d.scale(lambda as f64);
    let target = VectorField3::from_components(u.iter().map(|&c| psi.scaled(c)).collect());
    let mut worst: f64 = 0.0;
    for a in 0..3 {
        d.c[a].axpy(-1.0, &target.c[a]);
        worst = worst.max(d.c[a].max_abs());
    }
    assert!(worst / target.sup_norm() < 1e-4, "{worst}");
}
