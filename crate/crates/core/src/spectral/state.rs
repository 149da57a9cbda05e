use serde::{Deserialize, Serialize};

use super::field::{Components, ScalarField3, SymTensorField3, TimeSampled, VectorField3};
use super::ops::{div, div_sym, grad};
use crate::error::{Error, Result};

/// Frequency-energy levels `(Xi, e_v, e_R)` bounding a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqEnergyLevels {
    pub xi: f64,
    pub e_v: f64,
    pub e_r: f64,
    pub l: u32,
}

impl FreqEnergyLevels {
    pub fn new(xi: f64, e_v: f64, e_r: f64) -> Result<Self> {
        if !(xi >= 3.0) || !(e_v >= e_r) || !(e_r >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "levels need Xi >= 3 and e_v >= e_R >= 0, got ({xi}, {e_v}, {e_r})"
            )));
        }
        Ok(Self { xi, e_v, e_r, l: 2 })
    }

    /// `Xi (e_v / e_R)^{1/2}`.
    pub fn hat_xi(&self) -> f64 {
        self.xi * (self.e_v / self.e_r).sqrt()
    }
}

/// Time-sampled Euler-Reynolds triple `(v, p, R)`.
#[derive(Clone, Debug)]
pub struct EulerReynoldsState {
    pub v: TimeSampled<VectorField3>,
    pub p: TimeSampled<ScalarField3>,
    pub r: TimeSampled<SymTensorField3>,
    pub levels: FreqEnergyLevels,
    pub supp_interval: (f64, f64),
}

impl EulerReynoldsState {
    pub fn new(
        v: TimeSampled<VectorField3>,
        p: TimeSampled<ScalarField3>,
        r: TimeSampled<SymTensorField3>,
        levels: FreqEnergyLevels,
        supp_interval: (f64, f64),
    ) -> Result<Self> {
        let g = v.grid();
        for other in [p.grid(), r.grid()] {
            if other != g {
                return Err(Error::GridMismatch(g.n(), other.n()));
            }
        }
        if p.len() != v.len() || r.len() != v.len() || (p.t0 - v.t0).abs() > 1e-12 || (r.t0 - v.t0).abs() > 1e-12
        {
            return Err(Error::InvalidArgument("v, p, R must share one time sampling".into()));
        }
        Ok(Self { v, p, r, levels, supp_interval })
    }
}

/// Per-sample Euler-Reynolds residual norms.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
    pub max_div_v: Vec<f64>,
}

impl ResidualReport {
    pub fn worst(&self) -> f64 {
        self.max.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_div(&self) -> f64 {
        self.max_div_v.iter().copied().fold(0.0, f64::max)
    }
}

/// Second-order time derivative of sample `i` (one-sided at the ends).
pub fn time_derivative<T: Components>(f: &TimeSampled<T>, i: usize) -> T {
    let s = &f.samples;
    let n = s.len();
    let h = f.dt;
    if n == 2 {
        return T::lincomb(1.0 / h, &s[1], -1.0 / h, &s[0]);
    }
    if i == 0 {
        let mut d = T::lincomb(-1.5 / h, &s[0], 2.0 / h, &s[1]);
        d.axpy(-0.5 / h, &s[2]);
        d
    } else if i == n - 1 {
        let mut d = T::lincomb(1.5 / h, &s[n - 1], -2.0 / h, &s[n - 2]);
        d.axpy(0.5 / h, &s[n - 3]);
        d
    } else {
        T::lincomb(0.5 / h, &s[i + 1], -0.5 / h, &s[i - 1])
    }
}

/// `d_t v + div(v (x) v) + grad p - div R` at sample `i`.
pub fn residual_field(
    v: &TimeSampled<VectorField3>,
    p: &TimeSampled<ScalarField3>,
    r: &TimeSampled<SymTensorField3>,
    i: usize,
) -> VectorField3 {
    let mut res = time_derivative(v, i);
    res.axpy(1.0, &div_sym(&v.samples[i].outer_self()));
    res.axpy(1.0, &grad(&p.samples[i]));
    res.axpy(-1.0, &div_sym(&r.samples[i]));
    res
}

pub fn euler_reynolds_residual(state: &EulerReynoldsState) -> Result<ResidualReport> {
    residual_of(&state.v, &state.p, &state.r)
}

pub fn residual_of(
    v: &TimeSampled<VectorField3>,
    p: &TimeSampled<ScalarField3>,
    r: &TimeSampled<SymTensorField3>,
) -> Result<ResidualReport> {
    if v.len() < 3 {
        return Err(Error::InvalidArgument("residual needs at least 3 time samples".into()));
    }
    let g = v.grid();
    if p.grid() != g || r.grid() != g {
        return Err(Error::GridMismatch(g.n(), if p.grid() != g { p.grid().n() } else { r.grid().n() }));
    }
    let mut rep = ResidualReport::default();
    for i in 0..v.len() {
        let res = residual_field(v, p, r, i);
        let pointwise: Vec<f64> = (0..g.len())
            .map(|idx| {
                let a = res.at(idx);
                (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
            })
            .collect();
        rep.times.push(v.time(i));
        rep.max.push(pointwise.iter().copied().fold(0.0, f64::max));
        rep.mean.push(pointwise.iter().sum::<f64>() / pointwise.len() as f64);
        rep.max_div_v.push(div(&v.samples[i]).max_abs());
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::grid::Grid3;

    fn zero_state(c: f64) -> EulerReynoldsState {
        let g = Grid3::new(8).unwrap();
        let v = TimeSampled::from_fn(0.0, 0.1, 3, |_| VectorField3::zeros(g)).unwrap();
        let p = TimeSampled::from_fn(0.0, 0.1, 3, |_| ScalarField3::zeros(g)).unwrap();
        let r = TimeSampled::from_fn(0.0, 0.1, 3, |t| SymTensorField3::identity(g, c * (1.0 + t))).unwrap();
        EulerReynoldsState::new(v, p, r, FreqEnergyLevels::new(3.0, 1.0, 1.0).unwrap(), (0.0, 0.2)).unwrap()
    }

    #[test]
    fn trivial_states_have_zero_residual() {
        assert_eq!(euler_reynolds_residual(&zero_state(0.0)).unwrap().worst(), 0.0);
        assert!(euler_reynolds_residual(&zero_state(2.0)).unwrap().worst() < 1e-13);
    }

    #[test]
    fn needs_three_samples() {
        let g = Grid3::new(8).unwrap();
        let v = TimeSampled::from_fn(0.0, 0.1, 2, |_| VectorField3::zeros(g)).unwrap();
        let p = TimeSampled::from_fn(0.0, 0.1, 2, |_| ScalarField3::zeros(g)).unwrap();
        let r = TimeSampled::from_fn(0.0, 0.1, 2, |_| SymTensorField3::zeros(g)).unwrap();
        assert!(residual_of(&v, &p, &r).is_err());
    }

    #[test]
    fn levels_validate() {
        assert!(FreqEnergyLevels::new(2.0, 1.0, 0.5).is_err());
        assert!(FreqEnergyLevels::new(3.0, 0.1, 0.5).is_err());
        assert!((FreqEnergyLevels::new(10.0, 1.0, 0.01).unwrap().hat_xi() - 100.0).abs() < 1e-12);
    }
}
