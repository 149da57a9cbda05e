use onsager_core::gluing::{choose_theta, glue_flow, GlueOptions, ShearSeed};
use onsager_core::spectral::field::Components;
use onsager_core::spectral::state::{euler_reynolds_residual, FreqEnergyLevels};
use onsager_core::step::{convex_step, run_demo, seed_state, DemoConfig, ProfileSet, SeedProfile, StepOptions, StepParams};
use onsager_core::Grid3;

#[test]
fn seed_state_is_exact() {
    let grid = Grid3::new(8).unwrap();
    let prof = SeedProfile { half_width: 0.1 };
    let levels = FreqEnergyLevels::new(3.0, 1.0, 0.5).unwrap();
    let s = seed_state(|t| prof.e(t), grid, -0.15, 0.01, 31, levels).unwrap();
    assert!(euler_reynolds_residual(&s).unwrap().worst() < 1e-12);
    let k0 = s.r.index_of(0.0).unwrap();
    let tr = s.r.samples[k0].trace();
    assert!((tr.mean() + 1.0).abs() < 1e-14);
    for k in 0..s.r.len() {
        let t = s.r.time(k);
        let nonzero = s.r.samples[k].sup_norm() > 0.0;
        assert_eq!(nonzero, t.abs() < 0.1 - 1e-12, "t = {t}");
    }
}

#[test]
fn zero_stress_gives_zero_step() {
    let grid = Grid3::new(8).unwrap();
    let levels = FreqEnergyLevels::new(3.0, 1.0, 0.1).unwrap();
    let theta = choose_theta(&levels, 0.03).unwrap();
    let dt = theta / 16.0;
    let state = seed_state(|_| 0.0, grid, 0.0, dt, 129, levels).unwrap();
    let glued = glue_flow(&state, theta, &GlueOptions::default()).unwrap();
    let params = StepParams::from_lambda(&levels, 1, 1.0).unwrap();
    let out = convex_step(&glued, &levels, &ProfileSet::plane_waves(grid), &params, &StepOptions::default()).unwrap();
    assert_eq!(out.report.norms.r1, 0.0);
    assert_eq!(out.report.norms.v, 0.0);
    assert_eq!(out.r1.sup_norm(), 0.0);
}

#[test]
fn full_grid_step_on_glued_shear() {
    let grid = Grid3::new(16).unwrap();
    let seed = ShearSeed::default();
    let levels = seed.levels(grid).unwrap();
    let theta = choose_theta(&levels, 0.03).unwrap();
    let dt = theta / 16.0;
    let state = seed.state(grid, 0.0, dt, 129).unwrap();
    let glued = glue_flow(&state, theta, &GlueOptions::default()).unwrap();
    let params = StepParams::from_lambda(&levels, 2, 1.0).unwrap();
    let profiles = ProfileSet::plane_waves(Grid3::new(8).unwrap());
    let t = std::time::Instant::now();
    let out = convex_step(&glued, &levels, &profiles, &params, &StepOptions::default()).unwrap();
    let rep = &out.report;
    eprintln!("{}", serde_json::to_string_pretty(&(&rep.norms, &rep.residuals, &rep.indices)).unwrap());
    eprintln!("elapsed {:?}", t.elapsed());
    assert!(rep.norms.v > 0.0);
    assert!(rep.residuals.div_v1 < 1e-10);
    assert!(rep.residuals.step_defect < 1e-3, "{}", rep.residuals.step_defect);
    assert!(rep.residuals.osc_identity < 1e-6);
    for i in &rep.indices {
        assert!(i.cancellation < 1e-6, "{}", i.cancellation);
        assert!(i.reconstruction < 1e-8);
        assert!(i.min_gamma_sq >= 0.05);
        assert!(i.advective_defect < 1e-2);
        assert!(i.eps_sup <= 1.0 / 21.0 + 1e-12);
    }
}

#[test]
fn seed_demo_cell() {
    let cfg = DemoConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let r = run_demo(&cfg, Some(dir.path())).unwrap();
    assert!(dir.path().join("demo.json").exists());
    assert!(r.step.residuals.div_v1 < 1e-12);
    assert!(r.step.residuals.step_defect < 1e-6, "{}", r.step.residuals.step_defect);
    assert_eq!(r.energy_outside, 0.0);
    assert!(r.energy_max > r.energy_min_inside);
    assert!(r.energy_tracking < 0.25);
    assert!(r.step.norms.r_h == 0.0 && r.step.norms.r_m < 1e-12);
    for i in &r.step.indices {
        assert!(i.cancellation < 1e-12);
        assert!(i.min_gamma_sq >= 0.05);
    }
    // with v = 0 the transport term carries the whole new stress
    assert!((r.step.norms.r1 - r.step.norms.r_t).abs() <= 1e-9 * r.step.norms.r1);
}
