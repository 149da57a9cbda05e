use std::f64::consts::PI;

use onsager_core::flow::{
    back_to_labels, transport_elliptic_solve, Forcing, transport_solve, PicardOptions, Scheme, TransportOptions,
};
use onsager_core::{Components, Grid3, ScalarField3, SymTensorField3, TimeSampled, VectorField3};

fn constant_velocity(grid: Grid3, c: [f64; 3], t0: f64, dt: f64, count: usize) -> TimeSampled<VectorField3> {
    TimeSampled::from_fn(t0, dt, count, |_| VectorField3::constant(grid, c)).unwrap()
}

fn shear(grid: Grid3, t0: f64, dt: f64, count: usize) -> TimeSampled<VectorField3> {
    TimeSampled::from_fn(t0, dt, count, |_| VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0])).unwrap()
}

fn max_err(a: &ScalarField3, b: &ScalarField3) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn both() -> [TransportOptions; 2] {
    [TransportOptions::default(), TransportOptions { scheme: Scheme::Eulerian, ..Default::default() }]
}

#[test]
fn zero_velocity_integrates_forcing() {
    let grid = Grid3::new(16).unwrap();
    let v = constant_velocity(grid, [0.0; 3], 0.0, 0.05, 9);
    let f0 = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
    let gf = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[2]).sin());
    let g = TimeSampled::from_fn(0.0, 0.05, 9, |_| gf.clone()).unwrap();
    for opts in both() {
        let f = transport_solve(&v, Some(&g as &dyn Forcing<ScalarField3>), &f0, 0.0, 0.4, 8, &opts).unwrap();
        let mut want = f0.clone();
        want.axpy(0.4, &gf);
        assert!(max_err(f.samples.last().unwrap(), &want) < 1e-12);
    }
}

#[test]
fn constant_velocity_translates() {
    let grid = Grid3::new(32).unwrap();
    let c = [0.3, -0.2, 0.5];
    let v = constant_velocity(grid, c, 0.0, 0.025, 9);
    let f0 = ScalarField3::from_fn(grid, |x| (2.0 * PI * (x[0] + x[1])).cos() + (4.0 * PI * x[2]).sin());
    for opts in both() {
        let f = transport_solve::<ScalarField3>(&v, None, &f0, 0.0, 0.2, 8, &opts).unwrap();
        let t = 0.2;
        let want = ScalarField3::from_fn(grid, |x| {
            let y = [x[0] - c[0] * t, x[1] - c[1] * t, x[2] - c[2] * t];
            (2.0 * PI * (y[0] + y[1])).cos() + (4.0 * PI * y[2]).sin()
        });
        let e = max_err(f.samples.last().unwrap(), &want);
        assert!(e < 1e-6, "{opts:?}: {e:.3e}");
    }
}

#[test]
fn shear_matches_characteristics_and_runs_backward() {
    let grid = Grid3::new(32).unwrap();
    let v = shear(grid, -0.1, 0.0125, 17);
    let f0 = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[0]).cos());
    for opts in both() {
        for t1 in [0.1, -0.1] {
            let f = transport_solve::<ScalarField3>(&v, None, &f0, 0.0, t1, 8, &opts).unwrap();
            let idx = if t1 > 0.0 { f.len() - 1 } else { 0 };
            assert!((f.time(idx) - t1).abs() < 1e-12);
            let want = ScalarField3::from_fn(grid, |x| (2.0 * PI * (x[0] - t1 * (2.0 * PI * x[1]).sin())).cos());
            let e = max_err(&f.samples[idx], &want);
            assert!(e < 1e-6, "{opts:?} t1 = {t1}: {e:.3e}");
            // sup norm conserved without forcing
            assert!((f.samples[idx].max_abs() - f0.max_abs()).abs() < 1e-4);
        }
    }
}

#[test]
fn chart_closed_form_and_identity_bound() {
    let grid = Grid3::new(16).unwrap();
    let v = shear(grid, 0.0, 0.01, 21);
    let chart = back_to_labels(&v, 0.1, 10, 10, 0.01, &TransportOptions::default()).unwrap();
    for (i, g) in chart.grad.samples.iter().enumerate() {
        let t = chart.grad.time(i) - 0.1;
        let want = ScalarField3::from_fn(grid, |x| -2.0 * PI * t * (2.0 * PI * x[1]).cos());
        assert!(max_err(g.get(0, 1), &want) < 1e-9);
    }
    // |grad Gamma - Id| <= C window |grad v| with C <= 3
    let ratio = chart.distance_from_identity() / (0.1 * 2.0 * PI);
    assert!(ratio <= 3.0, "{ratio}");
    let chart_e = back_to_labels(&v, 0.1, 10, 10, 0.01, &TransportOptions { scheme: Scheme::Eulerian, ..Default::default() })
        .unwrap();
    let d = max_err(&chart.gamma.samples[0].c[0], &chart_e.gamma.samples[0].c[0]);
    assert!(d < 1e-8, "{d}");
}

#[test]
fn transport_elliptic_trivial_cases() {
    let grid = Grid3::new(16).unwrap();
    let v = constant_velocity(grid, [0.0; 3], 0.0, 0.05, 5);
    let zf = VectorField3::from_fn(grid, |x| [0.0, 0.0, (2.0 * PI * x[0]).cos()]);
    let z = TimeSampled::from_fn(0.0, 0.05, 5, |_| zf.clone()).unwrap();
    let rho0 = SymTensorField3::zeros(grid);
    let r = transport_elliptic_solve(&v, Some(&z as &dyn Forcing<VectorField3>), &rho0, 0.0, 0.2, 4, &PicardOptions::default()).unwrap();
    assert!(r.iterations <= 2);
    let want = onsager_core::antidiv_r(&zf).scaled(0.2);
    let got = r.rho.samples.last().unwrap();
    assert!(SymTensorField3::lincomb(1.0, got, -1.0, &want).sup_norm() < 1e-12);

    let r0 = transport_elliptic_solve(&v, None, &rho0, 0.0, 0.2, 4, &PicardOptions::default()).unwrap();
    assert_eq!(r0.rho.sup_norm(), 0.0);
}

#[test]
fn transport_elliptic_contracts_on_shear() {
    let grid = Grid3::new(16).unwrap();
    let v = shear(grid, 0.0, 0.01, 11);
    let zf = VectorField3::from_fn(grid, |x| [(2.0 * PI * x[2]).cos(), (2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).cos()]);
    let z = TimeSampled::from_fn(0.0, 0.01, 11, |_| zf.clone()).unwrap();
    let rho0 = SymTensorField3::zeros(grid);
    let r = transport_elliptic_solve(&v, Some(&z as &dyn Forcing<VectorField3>), &rho0, 0.0, 0.1, 10, &PicardOptions::default()).unwrap();
    println!("iterations {} factors {:?}", r.iterations, r.factors);
    assert!(r.factors.iter().skip(1).all(|&f| f <= 0.5));
}
