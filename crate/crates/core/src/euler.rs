//! Pseudo-spectral incompressible Euler solver used for the local exact
//! solutions of the gluing step.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::fft::C64;
use crate::spectral::field::{resample_modes, Components, ScalarField3, TimeSampled, VectorField3, SYM_PAIRS};
use crate::spectral::grid::Grid3;
use crate::spectral::ops::{effective_k, grad};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerOptions {
    pub cfl: f64,
    /// Abort when `sup |grad u|` exceeds this multiple of its initial value.
    pub max_grad_growth: f64,
}

impl Default for EulerOptions {
    fn default() -> Self {
        Self { cfl: 0.25, max_grad_growth: 10.0 }
    }
}

fn padded(grid: Grid3) -> Grid3 {
    let m = 3 * grid.n() / 2;
    Grid3::new(m + m % 2).expect("padded grid")
}

/// Modes of the dealiased `u (x) u` in symmetric slot order.
fn outer_modes(u: &VectorField3) -> Vec<Vec<C64>> {
    let grid = u.grid();
    let big = padded(grid);
    let fine: Vec<ScalarField3> =
        u.c.par_iter().map(|c| ScalarField3::from_modes(big, resample_modes(grid, &c.modes(), big))).collect();
    SYM_PAIRS
        .par_iter()
        .map(|&(j, l)| resample_modes(big, &fine[j].mul_collocated(&fine[l]).modes(), grid))
        .collect()
}

/// Euler right side `-P div(u (x) u)` and the pressure `p = -Lap^{-1} d_j d_l (u^j u^l)`.
pub fn euler_rhs(u: &VectorField3) -> (VectorField3, ScalarField3) {
    let grid = u.grid();
    let w = outer_modes(u);
    let mut rhs: [Vec<C64>; 3] = std::array::from_fn(|_| vec![C64::default(); grid.len()]);
    let mut p = vec![C64::default(); grid.len()];
    let i2pi = C64::new(0.0, 2.0 * PI);
    for idx in 0..grid.len() {
        let k = effective_k(&grid, grid.wavevector(idx));
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            continue;
        }
        let wm = |a: usize, b: usize| w[crate::spectral::field::sym_index(a, b)][idx];
        let wk: [C64; 3] = std::array::from_fn(|l| (0..3).map(|j| wm(j, l) * k[j]).sum());
        let kwk: C64 = (0..3).map(|l| wk[l] * k[l]).sum();
        p[idx] = -kwk / k2;
        for l in 0..3 {
            rhs[l][idx] = -i2pi * (wk[l] - k[l] * kwk / k2);
        }
    }
    let [a, b, c] = rhs;
    let v = VectorField3::new(
        ScalarField3::from_modes(grid, a),
        ScalarField3::from_modes(grid, b),
        ScalarField3::from_modes(grid, c),
    );
    (v, ScalarField3::from_modes(grid, p))
}

pub fn kinetic_energy(u: &VectorField3) -> f64 {
    0.5 * u.mean_square()
}

fn grad_sup(u: &VectorField3) -> f64 {
    let g: Vec<VectorField3> = u.c.iter().map(grad).collect();
    (0..u.c[0].data.len())
        .map(|i| g.iter().map(|gv| gv.at(i).iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct LocalSolution {
    pub u: TimeSampled<VectorField3>,
    pub p: TimeSampled<ScalarField3>,
    pub energy_drift: f64,
    pub grad_growth: f64,
    pub substeps: usize,
}

/// Solve incompressible Euler from `u(t0) = u0` to `t1` (either direction),
/// returning `steps + 1` samples in ascending time.
pub fn local_euler_solve(u0: &VectorField3, t0: f64, t1: f64, steps: usize, opts: &EulerOptions) -> Result<LocalSolution> {
    if steps == 0 {
        return Err(Error::InvalidArgument("Euler solve needs at least one step".into()));
    }
    let grid = u0.grid();
    let div0 = crate::spectral::ops::div(u0).max_abs();
    let scale = u0.sup_norm();
    if div0 > 1e-8 * scale.max(1.0) * grid.n() as f64 {
        return Err(Error::EulerSolve(format!("initial data not divergence free ({div0:.3e})")));
    }
    let h = (t1 - t0) / steps as f64;
    let e0 = kinetic_energy(u0);
    let g0 = grad_sup(u0);
    let mut us = vec![u0.clone()];
    let mut ps = vec![euler_rhs(u0).1];
    let mut drift: f64 = 0.0;
    let mut growth: f64 = 1.0;
    let mut total_sub = 0;
    for _ in 0..steps {
        let mut u = us.last().expect("nonempty").clone();
        let umax = u.sup_norm();
        let dt_cfl = if umax > 0.0 { opts.cfl * grid.spacing() / umax } else { f64::INFINITY };
        let sub = ((h.abs() / dt_cfl).ceil() as usize).max(1);
        let hs = h / sub as f64;
        for _ in 0..sub {
            let k1 = euler_rhs(&u).0;
            let k2 = euler_rhs(&VectorField3::lincomb(1.0, &u, 0.5 * hs, &k1)).0;
            let k3 = euler_rhs(&VectorField3::lincomb(1.0, &u, 0.5 * hs, &k2)).0;
            let k4 = euler_rhs(&VectorField3::lincomb(1.0, &u, hs, &k3)).0;
            u.axpy(hs / 6.0, &k1);
            u.axpy(hs / 3.0, &k2);
            u.axpy(hs / 3.0, &k3);
            u.axpy(hs / 6.0, &k4);
        }
        total_sub += sub;
        if !u.c.iter().all(|c| c.data.iter().all(|x| x.is_finite())) {
            return Err(Error::EulerSolve("non-finite velocity".into()));
        }
        if g0 > 0.0 {
            growth = growth.max(grad_sup(&u) / g0);
            if growth > opts.max_grad_growth {
                return Err(Error::EulerSolve(format!("gradient grew by {growth:.2} (window too long)")));
            }
        }
        if e0 > 0.0 {
            drift = drift.max((kinetic_energy(&u) - e0).abs() / e0);
        }
        ps.push(euler_rhs(&u).1);
        us.push(u);
    }
    let (lo, dt) = if h >= 0.0 { (t0, h) } else { (t1, -h) };
    if h < 0.0 {
        us.reverse();
        ps.reverse();
    }
    Ok(LocalSolution {
        u: TimeSampled::new(lo, dt, us)?,
        p: TimeSampled::new(lo, dt, ps)?,
        energy_drift: drift,
        grad_growth: growth,
        substeps: total_sub,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_stays_zero() {
        let grid = Grid3::new(8).unwrap();
        let s = local_euler_solve(&VectorField3::zeros(grid), 0.0, 0.1, 2, &EulerOptions::default()).unwrap();
        assert_eq!(s.u.sup_norm(), 0.0);
        assert_eq!(s.energy_drift, 0.0);
    }

    #[test]
    fn taylor_green_conserves_energy() {
        let grid = Grid3::new(16).unwrap();
        let tg = VectorField3::from_fn(grid, |x| {
            let (a, b, c) = (2.0 * PI * x[0], 2.0 * PI * x[1], 2.0 * PI * x[2]);
            [a.sin() * b.cos() * c.cos(), -a.cos() * b.sin() * c.cos(), 0.0]
        });
        let s = local_euler_solve(&tg, 0.0, -0.05, 5, &EulerOptions::default()).unwrap();
        assert!(s.energy_drift < 1e-6, "{}", s.energy_drift);
        assert!((s.u.t_end() - 0.0).abs() < 1e-15);
        assert!((s.u.t0 + 0.05).abs() < 1e-15);
    }

    #[test]
    fn shear_is_stationary() {
        let grid = Grid3::new(16).unwrap();
        let sh = VectorField3::from_fn(grid, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0]);
        let s = local_euler_solve(&sh, 0.0, 0.1, 4, &EulerOptions::default()).unwrap();
        let last = s.u.samples.last().unwrap();
        assert!(VectorField3::lincomb(1.0, last, -1.0, &sh).sup_norm() < 1e-12);
        assert!(s.p.samples.last().unwrap().max_abs() < 1e-12);
    }
}
