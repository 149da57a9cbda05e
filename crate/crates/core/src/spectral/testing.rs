//! Deterministic random band-limited fields for property checks.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::{ScalarField3, VectorField3};
use super::grid::Grid3;

/// Real field with random coefficients on `|k_i| <= kmax`.
pub fn random_band_limited(grid: Grid3, kmax: i64, seed: u64) -> ScalarField3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = vec![Complex64::default(); grid.len()];
    let kmax = kmax.min(grid.n() as i64 / 2 - 1);
    for k0 in -kmax..=kmax {
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                let idx = grid.mode_index([k0, k1, k2]).expect("in band");
                modes[idx] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
    }
    ScalarField3::from_modes(grid, modes)
}

pub fn random_vector(grid: Grid3, kmax: i64, seed: u64) -> VectorField3 {
    VectorField3::new(
        random_band_limited(grid, kmax, seed),
        random_band_limited(grid, kmax, seed.wrapping_add(7919)),
        random_band_limited(grid, kmax, seed.wrapping_add(104_729)),
    )
}
