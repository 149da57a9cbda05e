//! Cached 3-D complex FFTs built from 1-D rustfft plans.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex64;

pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<Fft3>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared plan for an `n`-point cube.
pub fn plan(n: usize) -> Arc<Fft3> {
    let mut map = cache().lock().expect("fft cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Fft3 {
                n,
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

impl Fft3 {
    /// Real-space samples to coefficients `c_k` with `f(x) = sum c_k e^{2 pi i k.x}`.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &self.fwd);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    /// Coefficients back to real-space samples.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inv);
    }

    fn transform(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let n2 = n * n;
        assert_eq!(data.len(), n2 * n);
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        // axis 0: contiguous rows
        fft.process_with_scratch(data, &mut scratch);
        let mut buf = vec![C64::default(); n2];
        // axis 1: per z-plane transpose
        for k in 0..n {
            let plane = &mut data[k * n2..(k + 1) * n2];
            for j in 0..n {
                for i in 0..n {
                    buf[i * n + j] = plane[j * n + i];
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for j in 0..n {
                for i in 0..n {
                    plane[j * n + i] = buf[i * n + j];
                }
            }
        }
        // axis 2: gather (i, k) slabs at fixed j
        for j in 0..n {
            for k in 0..n {
                let src = &data[j * n + k * n2..j * n + k * n2 + n];
                for i in 0..n {
                    buf[i * n + k] = src[i];
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..n {
                let dst = &mut data[j * n + k * n2..j * n + k * n2 + n];
                for i in 0..n {
                    dst[i] = buf[i * n + k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_mode_lands_in_its_slot() {
        let n = 8;
        let p = plan(n);
        let mut data = vec![C64::default(); n * n * n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let x = [i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64];
                    let ph = 2.0 * PI * (1.0 * x[0] - 2.0 * x[1] + 3.0 * x[2]);
                    data[i + n * (j + n * k)] = C64::new(ph.cos(), ph.sin());
                }
            }
        }
        let orig = data.clone();
        p.forward(&mut data);
        let slot = 1 + n * ((n - 2) + n * 3);
        for (idx, z) in data.iter().enumerate() {
            let want = if idx == slot { 1.0 } else { 0.0 };
            assert!((z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12, "idx {idx}: {z}");
        }
        p.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
