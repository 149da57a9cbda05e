//! Constant-coefficient operators applied as mode multipliers.
//!
//! First derivatives annihilate the Nyquist row of the differentiated axis,
//! so every identity below is exact for fields without Nyquist content.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::{plan, C64};
use super::field::{Components, ScalarField3, SymTensorField3, VectorField3, SYM_PAIRS};
use super::grid::Grid3;
use crate::error::{Error, Result};

const I: C64 = Complex64 { re: 0.0, im: 1.0 };

/// Wavevector with Nyquist components zeroed: the symbol of `grad / (2 pi i)`.
#[inline]
pub fn effective_k(grid: &Grid3, k: [i64; 3]) -> [f64; 3] {
    let q = grid.nyquist();
    let e = |c: i64| if c == q { 0.0 } else { c as f64 };
    [e(k[0]), e(k[1]), e(k[2])]
}

/// Apply `symbol(k)` to every coefficient in place.
pub fn apply_symbol<F>(grid: &Grid3, modes: &mut [C64], symbol: F)
where
    F: Fn([i64; 3]) -> C64,
{
    for (idx, z) in modes.iter_mut().enumerate() {
        *z *= symbol(grid.wavevector(idx));
    }
}

fn filtered(f: &ScalarField3, symbol: impl Fn([i64; 3]) -> C64) -> ScalarField3 {
    let mut m = f.modes();
    apply_symbol(&f.grid, &mut m, symbol);
    ScalarField3::from_modes(f.grid, m)
}

/// Spectral derivative along the listed axes, e.g. `[0, 0]` for d^2/dx_1^2.
pub fn derivative(f: &ScalarField3, axes: &[usize]) -> Result<ScalarField3> {
    if axes.len() > 6 || axes.iter().any(|&a| a > 2) {
        return Err(Error::InvalidArgument(format!("multi-index {axes:?} not supported")));
    }
    let g = f.grid;
    Ok(filtered(f, |k| {
        let ke = effective_k(&g, k);
        axes.iter().fold(C64::new(1.0, 0.0), |acc, &a| acc * I * (2.0 * PI * ke[a]))
    }))
}

/// Derivative of a complex sample array along one axis.
pub fn derivative_complex(grid: &Grid3, samples: &[C64], axis: usize) -> Vec<C64> {
    let p = plan(grid.n());
    let mut m = samples.to_vec();
    p.forward(&mut m);
    apply_symbol(grid, &mut m, |k| I * (2.0 * PI * effective_k(grid, k)[axis]));
    p.inverse(&mut m);
    m
}

pub fn grad(f: &ScalarField3) -> VectorField3 {
    let [c] = grads(&[f]).try_into().expect("one gradient");
    c
}

/// Gradients of several fields with the transforms batched.
pub fn grads(fs: &[&ScalarField3]) -> Vec<VectorField3> {
    let Some(first) = fs.first() else { return Vec::new() };
    let g = first.grid;
    let mut parts = Vec::with_capacity(3 * fs.len());
    for m in ScalarField3::modes_batch(fs) {
        for a in 0..3 {
            let mut c = m.clone();
            apply_symbol(&g, &mut c, |k| I * (2.0 * PI * effective_k(&g, k)[a]));
            parts.push(c);
        }
    }
    let mut it = ScalarField3::from_modes_batch(g, parts).into_iter();
    (0..fs.len())
        .map(|_| {
            let mut next = || it.next().expect("three components");
            VectorField3::new(next(), next(), next())
        })
        .collect()
}

/// Jacobian `(grad v)[a][b] = d_b v^a`.
pub fn jacobian(v: &VectorField3) -> [[ScalarField3; 3]; 3] {
    let [a, b, c]: [VectorField3; 3] = grads(&[&v.c[0], &v.c[1], &v.c[2]]).try_into().expect("three gradients");
    [a.c, b.c, c.c]
}

pub fn div(v: &VectorField3) -> ScalarField3 {
    let g = v.grid();
    let mut acc = vec![C64::default(); g.len()];
    for a in 0..3 {
        let mut m = v.c[a].modes();
        apply_symbol(&g, &mut m, |k| I * (2.0 * PI * effective_k(&g, k)[a]));
        acc.iter_mut().zip(&m).for_each(|(x, y)| *x += y);
    }
    ScalarField3::from_modes(g, acc)
}

/// `(div T)^l = d_j T^{jl}`.
pub fn div_sym(t: &SymTensorField3) -> VectorField3 {
    let g = t.grid();
    let modes: Vec<Vec<C64>> = t.c.iter().map(|c| c.modes()).collect();
    let out = div_sym_modes(&g, &modes);
    let [a, b, c]: [Vec<C64>; 3] = out.try_into().expect("3");
    VectorField3::new(
        ScalarField3::from_modes(g, a),
        ScalarField3::from_modes(g, b),
        ScalarField3::from_modes(g, c),
    )
}

/// Divergence in mode space of a symmetric tensor given by 6 slot arrays.
pub fn div_sym_modes(grid: &Grid3, t: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let mut out = vec![vec![C64::default(); grid.len()]; 3];
    for idx in 0..grid.len() {
        let ke = effective_k(grid, grid.wavevector(idx));
        for (s, &(j, l)) in SYM_PAIRS.iter().enumerate() {
            let z = t[s][idx];
            out[l][idx] += I * (2.0 * PI * ke[j]) * z;
            if j != l {
                out[j][idx] += I * (2.0 * PI * ke[l]) * z;
            }
        }
    }
    out
}

/// Divergence of a complex symmetric tensor given as real-space samples.
pub fn div_sym_complex(grid: &Grid3, t: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let p = plan(grid.n());
    let modes: Vec<Vec<C64>> = t
        .iter()
        .map(|c| {
            let mut m = c.clone();
            p.forward(&mut m);
            m
        })
        .collect();
    let mut out = div_sym_modes(grid, &modes);
    out.iter_mut().for_each(|m| p.inverse(m));
    out
}

pub fn laplacian(f: &ScalarField3) -> ScalarField3 {
    filtered(f, |k| {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        C64::new(-4.0 * PI * PI * k2, 0.0)
    })
}

/// Mean-zero solution of `Delta u = f - mean(f)`.
pub fn laplace_inverse(f: &ScalarField3) -> ScalarField3 {
    filtered(f, |k| {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 {
            C64::default()
        } else {
            C64::new(-1.0 / (4.0 * PI * PI * k2), 0.0)
        }
    })
}

pub fn laplace_inverse_sym(t: &SymTensorField3) -> SymTensorField3 {
    SymTensorField3::from_components(t.c.iter().map(laplace_inverse).collect())
}

/// Helmholtz decomposition `U = HU + mean(U) + grad(phi)` with
/// `phi = Delta^{-1} div U`.
pub struct Helmholtz {
    pub solenoidal: VectorField3,
    pub mean: [f64; 3],
    pub potential: ScalarField3,
}

pub fn helmholtz(u: &VectorField3) -> Helmholtz {
    let g = u.grid();
    let modes: Vec<Vec<C64>> = u.c.iter().map(|c| c.modes()).collect();
    let mut h = modes.clone();
    let mut phi = vec![C64::default(); g.len()];
    let mut mean = [0.0; 3];
    for idx in 0..g.len() {
        let k = g.wavevector(idx);
        if k == [0, 0, 0] {
            for a in 0..3 {
                mean[a] = modes[a][idx].re;
                h[a][idx] = C64::default();
            }
            continue;
        }
        let ke = effective_k(&g, k);
        let ke2: f64 = ke.iter().map(|x| x * x).sum();
        if ke2 == 0.0 {
            continue;
        }
        let kdotu: C64 = (0..3).map(|a| modes[a][idx] * ke[a]).sum();
        // phi_hat = (2 pi i k.U) / (-4 pi^2 |k|^2)
        phi[idx] = -I * kdotu / (2.0 * PI * ke2);
        for a in 0..3 {
            h[a][idx] -= kdotu * ke[a] / ke2;
        }
    }
    let [a, b, c]: [Vec<C64>; 3] = h.try_into().expect("3");
    Helmholtz {
        solenoidal: VectorField3::new(
            ScalarField3::from_modes(g, a),
            ScalarField3::from_modes(g, b),
            ScalarField3::from_modes(g, c),
        ),
        mean,
        potential: ScalarField3::from_modes(g, phi),
    }
}

/// Leray projection `U - mean(U) - grad Delta^{-1} div U`.
pub fn leray(u: &VectorField3) -> VectorField3 {
    helmholtz(u).solenoidal
}

/// Symbol of the inverse divergence: coefficients of `R[U]` at one mode.
#[inline]
pub fn antidiv_symbol(grid: &Grid3, k: [i64; 3], u: [C64; 3]) -> [C64; 6] {
    let ke = effective_k(grid, k);
    let ke2: f64 = ke.iter().map(|x| x * x).sum();
    if ke2 == 0.0 {
        return [C64::default(); 6];
    }
    let kdotu: C64 = (0..3).map(|a| u[a] * ke[a]).sum();
    let hu: [C64; 3] = std::array::from_fn(|a| u[a] - kdotu * ke[a] / ke2);
    let pref = -I / (2.0 * PI * ke2);
    let mut out = [C64::default(); 6];
    for (s, &(j, l)) in SYM_PAIRS.iter().enumerate() {
        let mut z = hu[j] * ke[l] + hu[l] * ke[j];
        if j == l {
            z += kdotu;
        }
        out[s] = pref * z;
    }
    out
}

/// Inverse divergence in mode space: 3 vector-slot arrays to 6 tensor slots.
pub fn antidiv_modes(grid: &Grid3, u: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let mut out = vec![vec![C64::default(); grid.len()]; 6];
    for idx in 0..grid.len() {
        let r = antidiv_symbol(grid, grid.wavevector(idx), [u[0][idx], u[1][idx], u[2][idx]]);
        for s in 0..6 {
            out[s][idx] = r[s];
        }
    }
    out
}

/// `R^{jl}[U] = Delta^{-1}(d^l HU^j + d^j HU^l) + delta^{jl} Delta^{-1} div U`.
///
/// Symmetric, mean zero, and `d_j R^{jl}[U] = U^l - mean(U^l)`.
pub fn antidiv_r(u: &VectorField3) -> SymTensorField3 {
    let g = u.grid();
    let modes = ScalarField3::modes_batch(&[&u.c[0], &u.c[1], &u.c[2]]);
    SymTensorField3::from_components(ScalarField3::from_modes_batch(g, antidiv_modes(&g, &modes)))
}

/// `R` applied to a complex vector field given as real-space samples.
pub fn antidiv_r_complex(grid: &Grid3, u: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let p = plan(grid.n());
    let modes: Vec<Vec<C64>> = u
        .iter()
        .map(|c| {
            let mut m = c.clone();
            p.forward(&mut m);
            m
        })
        .collect();
    let mut out = antidiv_modes(grid, &modes);
    out.iter_mut().for_each(|m| p.inverse(m));
    out
}

/// Zero every coefficient touching the Nyquist row.
pub fn drop_nyquist(f: &ScalarField3) -> ScalarField3 {
    let g = f.grid;
    filtered(f, |k| if g.touches_nyquist(k) { C64::default() } else { C64::new(1.0, 0.0) })
}
