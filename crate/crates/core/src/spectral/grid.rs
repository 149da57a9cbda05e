use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform sampling of the unit torus (R/Z)^3 with `n` points per axis.
///
/// Sample `(i, j, k)` sits at `(i/n, j/n, k/n)` and is stored at flat index
/// `i + n*(j + n*k)` (x fastest). Mode index `i` carries wavenumber `i` for
/// `i < n/2` and `i - n` otherwise, so the Nyquist row is `-n/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid3 {
    n: usize,
}

impl Grid3 {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unflatten(idx);
        let h = 1.0 / self.n as f64;
        [i as f64 * h, j as f64 * h, k as f64 * h]
    }

    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    #[inline]
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let [i, j, k] = self.unflatten(idx);
        [self.wavenumber(i), self.wavenumber(j), self.wavenumber(k)]
    }

    /// Slot holding wavenumber `k`, if it is representable.
    #[inline]
    pub fn slot(&self, k: i64) -> Option<usize> {
        let h = (self.n / 2) as i64;
        if k >= -h && k < h {
            Some(if k >= 0 { k as usize } else { (k + self.n as i64) as usize })
        } else {
            None
        }
    }

    pub fn mode_index(&self, k: [i64; 3]) -> Option<usize> {
        Some(self.index(self.slot(k[0])?, self.slot(k[1])?, self.slot(k[2])?))
    }

    #[inline]
    pub fn nyquist(&self) -> i64 {
        -((self.n / 2) as i64)
    }

    /// True if any component of `k` is the Nyquist wavenumber.
    #[inline]
    pub fn touches_nyquist(&self, k: [i64; 3]) -> bool {
        let q = self.nyquist();
        k[0] == q || k[1] == q || k[2] == q
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }
}
