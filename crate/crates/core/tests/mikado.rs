use onsager_core::mikado::{stationarity, PipeFamily};
use onsager_core::Grid3;

#[test]
fn stationary_pipes_at_64() {
    let fam = PipeFamily::new(Grid3::new(64).unwrap()).unwrap();
    for f in 0..6 {
        let p = &fam.profiles[f];
        assert!(p.mean().abs() < 1e-8);
        assert!((p.mean_square() - 1.0).abs() < 1e-3);
    }
    let r = stationarity(&fam, &[0.5; 6]);
    println!("{r:?} r0 = {}", fam.r0());
    for j in 0..3 {
        for l in 0..3 {
            let want = if j == l { 1.0 } else { 0.0 };
            assert!((r.mean_uu[j][l] - want).abs() < 1e-3);
        }
    }
    assert!(r.div_u <= 1e-8 * r.u_sup);
    assert!(r.div_uu <= 1e-4 * r.u_sup * r.u_sup);
    assert!(r.overlap < 1e-6);

    let single = stationarity(&fam, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(single.div_u <= 1e-8 * single.u_sup);
    let zero = fam.mikado_flow(&[0.0; 6]);
    assert_eq!(zero.c[0].max_abs(), 0.0);
}

#[test]
fn antidiv_potential_recovers_pipe() {
    let fam = PipeFamily::new(Grid3::new(64).unwrap()).unwrap();
    for f in [0, 3] {
        let om = fam.pipe_antidiv(f);
        let fd = onsager_core::mikado::DIRECTIONS[f];
        let psi = &fam.profiles[f];
        let mut worst: f64 = 0.0;
        for b in 0..3 {
            let mut d = onsager_core::derivative(om.get(0, b), &[0]).unwrap();
            d += &onsager_core::derivative(om.get(1, b), &[1]).unwrap();
            d += &onsager_core::derivative(om.get(2, b), &[2]).unwrap();
            d.axpy(-(fd[b] as f64), psi);
            worst = worst.max(d.max_abs());
            for a in 0..3 {
                let s = om.get(a, b).data.iter().zip(&om.get(b, a).data).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
                assert_eq!(s, 0.0);
                assert!(om.get(a, b).mean().abs() < 1e-14);
            }
        }
        println!("pipe {f}: antidiv error {:.3e}", worst / psi.max_abs());
        assert!(worst < 1e-8 * psi.max_abs());
    }
}
