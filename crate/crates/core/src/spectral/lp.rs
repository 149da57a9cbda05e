//! Littlewood-Paley projections, Hoelder seminorm estimate.

use num_complex::Complex64;

use super::bump::smoothstep;
use super::field::ScalarField3;
use super::ops::apply_symbol;

/// Radial multiplier: 1 on `[0, 1]`, 0 on `[2, inf)`, smooth and monotone between.
pub fn chi_hat(s: f64) -> f64 {
    1.0 - smoothstep(s - 1.0)
}

#[inline]
fn kabs(k: [i64; 3]) -> f64 {
    ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt()
}

/// Multiplier of `P_{<=q}`; for `q < 0` only the mean survives.
pub fn low_pass_symbol(k: [i64; 3], q: i32) -> f64 {
    chi_hat(kabs(k) / 2f64.powi(q))
}

pub fn band_symbol(k: [i64; 3], q: i32) -> f64 {
    if q < 0 {
        return 0.0;
    }
    low_pass_symbol(k, q) - low_pass_symbol(k, q - 1)
}

pub fn project_low(f: &ScalarField3, q: i32) -> ScalarField3 {
    let mut m = f.modes();
    apply_symbol(&f.grid, &mut m, |k| Complex64::new(low_pass_symbol(k, q), 0.0));
    ScalarField3::from_modes(f.grid, m)
}

/// `P_q = P_{<=q} - P_{<=q-1}`.
pub fn project_band(f: &ScalarField3, q: i32) -> ScalarField3 {
    let mut m = f.modes();
    apply_symbol(&f.grid, &mut m, |k| Complex64::new(band_symbol(k, q), 0.0));
    ScalarField3::from_modes(f.grid, m)
}

/// Largest band index used by the seminorm: `log2(n/2)`.
pub fn seminorm_qmax(n: usize) -> i32 {
    (n / 2).trailing_zeros() as i32 + if (n / 2).is_power_of_two() { 0 } else { 1 }
}

/// Band index after which `P_{<=q}` is the identity on the grid.
pub fn partition_qmax(n: usize) -> i32 {
    let kmax = 3f64.sqrt() * (n / 2) as f64;
    kmax.log2().ceil() as i32
}

/// `sup_q 2^{alpha q} max|P_q f|` over `0 <= q <= log2(n/2)`.
pub fn holder_seminorm(f: &ScalarField3, alpha: f64) -> f64 {
    let modes = f.modes();
    (0..=seminorm_qmax(f.grid.n()))
        .map(|q| {
            let mut m = modes.clone();
            apply_symbol(&f.grid, &mut m, |k| Complex64::new(band_symbol(k, q), 0.0));
            2f64.powf(alpha * q as f64) * ScalarField3::from_modes(f.grid, m).max_abs()
        })
        .fold(0.0, f64::max)
}
