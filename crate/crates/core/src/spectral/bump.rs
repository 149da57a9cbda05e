//! One-dimensional C-infinity bump, its cumulative integral and smoothstep.

use std::sync::OnceLock;

/// Unnormalized bump `exp(-1/(1-s^2))` on `|s| < 1`.
#[inline]
pub fn raw_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

const TABLE: usize = 4096;

struct Cdf {
    mass: f64,
    cum: Vec<f64>,
}

fn cdf_table() -> &'static Cdf {
    static T: OnceLock<Cdf> = OnceLock::new();
    T.get_or_init(|| {
        // composite Gauss-Legendre (5 nodes) on each table cell of [-1, 1]
        let nodes = [
            (0.0, 0.568_888_888_888_888_9),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let h = 2.0 / TABLE as f64;
        let mut cum = vec![0.0; TABLE + 1];
        for i in 0..TABLE {
            let a = -1.0 + i as f64 * h;
            let mid = a + 0.5 * h;
            let cell: f64 = nodes.iter().map(|(x, w)| w * raw_bump(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h;
            cum[i + 1] = cum[i] + cell;
        }
        Cdf { mass: cum[TABLE], cum }
    })
}

/// Unit-mass bump density on `(-1, 1)`.
#[inline]
pub fn bump(s: f64) -> f64 {
    raw_bump(s) / cdf_table().mass
}

/// Derivative of [`bump`].
#[inline]
pub fn bump_prime(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let d = 1.0 - s * s;
    -2.0 * s / (d * d) * bump(s)
}

/// Cumulative integral of [`bump`] from -1 to `s`; 0 below -1, 1 above 1.
pub fn bump_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let t = cdf_table();
    let h = 2.0 / TABLE as f64;
    let u = (s + 1.0) / h;
    let i = (u.floor() as usize).min(TABLE - 1);
    let a = -1.0 + i as f64 * h;
    // cubic Hermite with exact end slopes
    let (y0, y1) = (t.cum[i], t.cum[i + 1]);
    let (m0, m1) = (raw_bump(a) * h, raw_bump(a + h) * h);
    let x = u - i as f64;
    let x2 = x * x;
    let x3 = x2 * x;
    let v = (2.0 * x3 - 3.0 * x2 + 1.0) * y0
        + (x3 - 2.0 * x2 + x) * m0
        + (-2.0 * x3 + 3.0 * x2) * y1
        + (x3 - x2) * m1;
    (v / t.mass).clamp(0.0, 1.0)
}

/// Mollified indicator of `[a, b]` at half-width `h`: `bump_h * 1_[a,b]`.
pub fn smoothed_indicator(t: f64, a: f64, b: f64, h: f64) -> f64 {
    bump_cdf((t - a) / h) - bump_cdf((t - b) / h)
}

/// Time derivative of [`smoothed_indicator`].
pub fn smoothed_indicator_dt(t: f64, a: f64, b: f64, h: f64) -> f64 {
    (bump((t - a) / h) - bump((t - b) / h)) / h
}

/// Second time derivative of [`smoothed_indicator`].
pub fn smoothed_indicator_dtt(t: f64, a: f64, b: f64, h: f64) -> f64 {
    (bump_prime((t - a) / h) - bump_prime((t - b) / h)) / (h * h)
}

/// C-infinity monotone step: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smoothstep(x: f64) -> f64 {
    let phi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = phi(x);
        a / (a + phi(1.0 - x))
    }
}
