//! Mollification by an even compactly supported product kernel.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::bump::bump;
use super::field::{Components, ScalarField3};
use super::grid::Grid3;
use super::ops::apply_symbol;
use crate::error::{Error, Result};

/// Fourier transform of the unit-mass 1-D bump at frequency `xi`.
///
/// The kernel is even, so the transform is real: `int bump(s) cos(2 pi xi s) ds`.
pub fn bump_transform(xi: f64) -> f64 {
    const M: usize = 2048;
    let h = 2.0 / M as f64;
    // composite Simpson on [-1, 1]
    let mut acc = 0.0;
    for i in 0..=M {
        let s = -1.0 + i as f64 * h;
        let w = if i == 0 || i == M {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * bump(s) * (2.0 * PI * xi * s).cos();
    }
    acc * h / 3.0
}

/// 1-D multiplier table for scale `eps` indexed by mode slot.
fn axis_table(grid: &Grid3, eps: f64) -> Vec<f64> {
    (0..grid.n()).map(|i| bump_transform(eps * grid.wavenumber(i) as f64)).collect()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 0.25) {
        return Err(Error::InvalidArgument(format!("mollifier scale {eps} outside (0, 1/4]")));
    }
    Ok(())
}

/// Mode multiplier of `eta_eps *`, raised to `power` (2 for double mollification).
pub fn mollifier_symbol(grid: &Grid3, eps: f64, power: i32) -> impl Fn([i64; 3]) -> Complex64 {
    let t = axis_table(grid, eps);
    let g = *grid;
    move |k: [i64; 3]| {
        let v = t[g.slot(k[0]).unwrap()] * t[g.slot(k[1]).unwrap()] * t[g.slot(k[2]).unwrap()];
        Complex64::new(v.powi(power), 0.0)
    }
}

/// `eta_eps * f` for the kernel `eps^{-3} prod bump(x_i / eps)`.
pub fn mollify(f: &ScalarField3, eps: f64) -> Result<ScalarField3> {
    mollify_power(f, eps, 1)
}

pub fn mollify_power(f: &ScalarField3, eps: f64, power: i32) -> Result<ScalarField3> {
    check_eps(eps)?;
    let sym = mollifier_symbol(&f.grid, eps, power);
    let mut m = f.modes();
    apply_symbol(&f.grid, &mut m, sym);
    Ok(ScalarField3::from_modes(f.grid, m))
}

/// Componentwise mollification of any multi-component field.
pub fn mollify_field<T: Components>(f: &T, eps: f64, power: i32) -> Result<T> {
    check_eps(eps)?;
    let g = f.grid();
    let sym = mollifier_symbol(&g, eps, power);
    let comps = f
        .components()
        .iter()
        .map(|c| {
            let mut m = c.modes();
            apply_symbol(&g, &mut m, &sym);
            ScalarField3::from_modes(g, m)
        })
        .collect();
    Ok(T::from_components(comps))
}

/// `eta_eps * (f g) - (eta_eps * f)(eta_eps * g)`, products dealiased.
pub fn commutator_defect(f: &ScalarField3, g: &ScalarField3, eps: f64) -> Result<ScalarField3> {
    let mut a = mollify(&f.mul(g), eps)?;
    let b = mollify(f, eps)?.mul(&mollify(g, eps)?);
    a -= &b;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ops::derivative;

    fn g(n: usize) -> Grid3 {
        Grid3::new(n).unwrap()
    }

    #[test]
    fn unit_mass_and_constants() {
        assert!((bump_transform(0.0) - 1.0).abs() < 1e-12);
        let f = ScalarField3::constant(g(8), 1.7);
        let m = mollify(&f, 0.1).unwrap();
        assert!(m.data.iter().all(|x| (x - 1.7).abs() < 1e-12));
        assert!(mollify(&f, 0.3).is_err());
        assert!(mollify(&f, 0.0).is_err());
    }

    #[test]
    fn preserves_mean() {
        let grid = g(16);
        let f = ScalarField3::from_fn(grid, |x| 0.3 + (2.0 * PI * x[0]).cos() * (2.0 * PI * x[2]).sin());
        let m = mollify(&f, 0.2).unwrap();
        assert!((m.mean() - f.mean()).abs() < 1e-14);
    }

    #[test]
    fn defect_is_quadratic_in_eps() {
        let grid = g(16);
        let f = ScalarField3::from_fn(grid, |x| (2.0 * PI * 2.0 * x[0]).cos());
        let defect = |eps: f64| {
            let mut d = f.clone();
            d -= &mollify(&f, eps).unwrap();
            d.max_abs()
        };
        let ratio = defect(0.05) / defect(0.025);
        assert!((ratio - 4.0).abs() < 0.8, "{ratio}");
    }

    #[test]
    fn commutes_with_derivative() {
        let grid = g(16);
        let f = ScalarField3::from_fn(grid, |x| (2.0 * PI * (x[0] + 2.0 * x[1])).sin());
        let a = derivative(&mollify(&f, 0.1).unwrap(), &[1]).unwrap();
        let b = mollify(&derivative(&f, &[1]).unwrap(), 0.1).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn commutator_vanishes_for_constants() {
        let grid = g(16);
        let f = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[1]).sin());
        let c = ScalarField3::constant(grid, 2.0);
        assert!(commutator_defect(&f, &c, 0.1).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn commutator_ratio_near_four() {
        let grid = g(16);
        let f = ScalarField3::from_fn(grid, |x| (2.0 * PI * x[0]).sin());
        let a = commutator_defect(&f, &f, 0.05).unwrap().max_abs();
        let b = commutator_defect(&f, &f, 0.025).unwrap().max_abs();
        assert!((a / b - 4.0).abs() < 0.8, "{}", a / b);
    }
}
