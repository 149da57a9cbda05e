//! Mikado flows: stationary Euler solutions built from disjoint periodic pipes
//! along the six directions `e_i +- e_j`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::bump::raw_bump;
use crate::spectral::field::{Components, MatrixField3, ScalarField3, VectorField3};
use crate::spectral::grid::Grid3;
use crate::spectral::io::write_f3d;
use crate::spectral::ops::{apply_symbol, div, effective_k};

pub const DIRECTIONS: [[i64; 3]; 6] = [[1, 1, 0], [1, -1, 0], [1, 0, 1], [1, 0, -1], [0, 1, 1], [0, 1, -1]];

/// Extra clearance demanded beyond `6 r0` when choosing `r0`.
pub const PLACEMENT_MARGIN: f64 = 1e-6;

/// Largest tolerated relative mean-moment error of a sampled profile.
pub const RESOLUTION_TOL: f64 = 0.01;

fn dirf(f: usize) -> [f64; 3] {
    DIRECTIONS[f].map(|c| c as f64)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

/// `sum_f f (x) f` in integer arithmetic; equals `4 I`.
pub fn direction_outer_sum() -> [[i64; 3]; 3] {
    let mut s = [[0; 3]; 3];
    for f in DIRECTIONS {
        for j in 0..3 {
            for l in 0..3 {
                s[j][l] += f[j] * f[l];
            }
        }
    }
    s
}

/// Gram matrix `<f (x) f, g (x) g> = (f . g)^2` of the six rank-one tensors.
pub fn gram_matrix() -> [[i64; 6]; 6] {
    let mut g = [[0; 6]; 6];
    for a in 0..6 {
        for b in 0..6 {
            let d: i64 = (0..3).map(|i| DIRECTIONS[a][i] * DIRECTIONS[b][i]).sum();
            g[a][b] = d * d;
        }
    }
    g
}

/// Exact integer determinant by cofactor expansion.
pub fn det_i64(m: &[Vec<i64>]) -> i64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|c| {
            let minor: Vec<Vec<i64>> =
                m[1..].iter().map(|row| row.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &v)| v).collect()).collect();
            let sign = if c % 2 == 0 { 1 } else { -1 };
            sign * m[0][c] * det_i64(&minor)
        })
        .sum()
}

/// Coefficients `c_f` with `sum_f c_f f (x) f = a` for symmetric `a`.
pub fn basis_coefficients(a: &[[f64; 3]; 3]) -> [f64; 6] {
    let s12 = 0.5 * (a[0][0] + a[1][1] - a[2][2]);
    let s13 = 0.5 * (a[0][0] + a[2][2] - a[1][1]);
    let s23 = 0.5 * (a[1][1] + a[2][2] - a[0][0]);
    [
        0.5 * (s12 + a[0][1]),
        0.5 * (s12 - a[0][1]),
        0.5 * (s13 + a[0][2]),
        0.5 * (s13 - a[0][2]),
        0.5 * (s23 + a[1][2]),
        0.5 * (s23 - a[1][2]),
    ]
}

/// Distance between the periodized lines `p + s f` and `q + t g` on the unit torus.
pub fn line_distance(p: [f64; 3], f: usize, q: [f64; 3], g: usize) -> f64 {
    let nv = cross(DIRECTIONS[f], DIRECTIONS[g]);
    let nn = nv.map(|c| c as f64);
    let norm = dot(nn, nn).sqrt();
    if norm == 0.0 {
        // parallel lines: distance of q - p to the lattice shifted along f
        let fd = dirf(f);
        let ff = dot(fd, fd);
        let mut best = f64::INFINITY;
        for l in lattice_images() {
            let w = [q[0] - p[0] + l[0], q[1] - p[1] + l[1], q[2] - p[2] + l[2]];
            let c = dot(w, fd) / ff;
            let perp = [w[0] - c * fd[0], w[1] - c * fd[1], w[2] - c * fd[2]];
            best = best.min(dot(perp, perp).sqrt());
        }
        return best;
    }
    let g0 = gcd(gcd(nv[0], nv[1]), nv[2]) as f64;
    let s = dot([q[0] - p[0], q[1] - p[1], q[2] - p[2]], nn).rem_euclid(g0);
    s.min(g0 - s) / norm
}

fn lattice_images() -> impl Iterator<Item = [f64; 3]> {
    (0..27).map(|i| [(i % 3) as f64 - 1.0, ((i / 3) % 3) as f64 - 1.0, (i / 9) as f64 - 1.0])
}

pub fn min_pair_distance(offsets: &[[f64; 3]; 6]) -> f64 {
    let mut d = f64::INFINITY;
    for a in 0..6 {
        for b in a + 1..6 {
            d = d.min(line_distance(offsets[a], a, offsets[b], b));
        }
    }
    d
}

/// Distance from `x` to the periodized line through `p` along direction `f`.
pub fn point_line_distance(x: [f64; 3], p: [f64; 3], f: usize) -> f64 {
    let fd = dirf(f);
    let ff = dot(fd, fd);
    let w0: [f64; 3] = std::array::from_fn(|i| {
        let d = (x[i] - p[i]).rem_euclid(1.0);
        if d >= 0.5 { d - 1.0 } else { d }
    });
    let mut best = f64::INFINITY;
    for l in lattice_images() {
        let w = [w0[0] + l[0], w0[1] + l[1], w0[2] + l[2]];
        let c = dot(w, fd) / ff;
        let perp = [w[0] - c * fd[0], w[1] - c * fd[1], w[2] - c * fd[2]];
        best = best.min(dot(perp, perp));
    }
    best.sqrt()
}

/// Brute-force oracle: sample `density` points along each line of a pair and
/// take the exact distance to the other line; minimum over all pairs.
pub fn sampled_min_distance(offsets: &[[f64; 3]; 6], density: usize) -> f64 {
    let mut d = f64::INFINITY;
    for a in 0..6 {
        for b in 0..6 {
            if a == b {
                continue;
            }
            let fa = dirf(a);
            for i in 0..density {
                let s = i as f64 / density as f64;
                let x = [offsets[a][0] + s * fa[0], offsets[a][1] + s * fa[1], offsets[a][2] + s * fa[2]];
                d = d.min(point_line_distance(x, offsets[b], b));
            }
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub offsets: [[f64; 3]; 6],
    pub min_distance: f64,
    pub sampled_min_distance: f64,
    pub r0: f64,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 1;
const RESTARTS: usize = 300;

/// Coordinate descent on the six offsets maximizing the minimum line distance.
pub fn place_pipes(sample_density: usize, seed: u64) -> Result<Placement> {
    if sample_density < 1000 {
        return Err(Error::InvalidArgument(format!("sample density {sample_density} below 1000")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = [0.1, 0.03, 0.01, 0.003, 0.001, 3e-4];
    let mut best = ([[0.0; 3]; 6], 0.0);
    for _ in 0..RESTARTS {
        let mut p: [[f64; 3]; 6] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen::<f64>()));
        let mut d = min_pair_distance(&p);
        for _ in 0..200 {
            let mut improved = false;
            for a in 0..6 {
                for ax in 0..3 {
                    for &h in &steps {
                        for sg in [1.0, -1.0] {
                            let mut q = p;
                            q[a][ax] = (q[a][ax] + sg * h).rem_euclid(1.0);
                            let dq = min_pair_distance(&q);
                            if dq > d {
                                p = q;
                                d = dq;
                                improved = true;
                            }
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if d > best.1 {
            best = (p, d);
        }
    }
    let (offsets, min_distance) = best;
    let r0 = (min_distance - PLACEMENT_MARGIN) / 6.0;
    let sampled = sampled_min_distance(&offsets, sample_density);
    if r0 <= 0.0 || sampled < 6.0 * r0 {
        return Err(Error::PlacementFailed { best_distance: min_distance, best_r0: r0 });
    }
    Ok(Placement { offsets, min_distance, sampled_min_distance: sampled, r0, seed })
}

/// Radial bump on `s in (0, 1)`, `s = (d - r0) / r0`.
#[inline]
fn radial_bump(s: f64) -> f64 {
    raw_bump(2.0 * s - 1.0)
}

/// Annulus split point making `int g(dist) dX = 0` for the continuum profile.
pub fn continuum_split() -> f64 {
    let m = 4000;
    let h = 1.0 / m as f64;
    let (mut m0, mut m1) = (0.0, 0.0);
    for i in 0..=m {
        let s = i as f64 * h;
        let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let b = (1.0 + s) * radial_bump(s);
        m0 += w * b;
        m1 += w * b * s;
    }
    m1 / m0
}

/// Sampled profile `g(dist(X, l_f))` with discrete mean 0 and mean square 1.
///
/// Returns the profile and the relative mean-moment error of the continuum
/// profile on this grid.
pub fn pipe_profile(grid: Grid3, f: usize, p: [f64; 3], r0: f64) -> Result<(ScalarField3, f64)> {
    if f >= 6 || !(r0 > 0.0) {
        return Err(Error::InvalidArgument(format!("bad pipe ({f}, r0 = {r0})")));
    }
    let s = ScalarField3::from_fn(grid, |x| (point_line_distance(x, p, f) - r0) / r0);
    let b = s.map(radial_bump);
    let bsum: f64 = b.data.iter().sum();
    if bsum <= 0.0 {
        return Err(Error::Resolution(format!("no grid point in the support of pipe {f}")));
    }
    let sc = continuum_split();
    let cont: Vec<f64> = b.data.iter().zip(&s.data).map(|(b, s)| b * (s - sc)).collect();
    let cmean = cont.iter().sum::<f64>() / cont.len() as f64;
    let crms = (cont.iter().map(|v| v * v).sum::<f64>() / cont.len() as f64).sqrt();
    let moment_error = (cmean / crms).abs();
    if moment_error > RESOLUTION_TOL {
        return Err(Error::Resolution(format!(
            "pipe {f}: relative mean-moment error {moment_error:.3e} at n = {} (r0 = {r0:.4})",
            grid.n()
        )));
    }
    let coeffs = constrained_coefficients(grid, &b, &s, sc)?;
    let mut psi = ScalarField3 {
        grid,
        data: b
            .data
            .iter()
            .zip(&s.data)
            .map(|(b, s)| b * coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c))
            .collect(),
    };
    let ms = psi.mean_square();
    psi.scale(1.0 / ms.sqrt());
    Ok((psi, moment_error))
}

const PROFILE_DEGREE: usize = 4;

/// Polynomial `c(s)` of degree [`PROFILE_DEGREE`] closest to `s - split` such that
/// `B(s) c(s)` has vanishing discrete mean and no content on wavevectors whose
/// components are all 0 or Nyquist (the modes no discrete divergence reaches).
fn constrained_coefficients(grid: Grid3, b: &ScalarField3, s: &ScalarField3, split: f64) -> Result<Vec<f64>> {
    let m = PROFILE_DEGREE + 1;
    let mut rows = Vec::new();
    for mask in 0..8usize {
        let mut row = vec![0.0; m];
        for (idx, (&bv, &sv)) in b.data.iter().zip(&s.data).enumerate() {
            if bv == 0.0 {
                continue;
            }
            let ijk = grid.unflatten(idx);
            let parity: usize = (0..3).filter(|&a| mask >> a & 1 == 1).map(|a| ijk[a]).sum();
            let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
            let mut pw = bv * sign;
            for r in row.iter_mut() {
                *r += pw;
                pw *= sv;
            }
        }
        rows.push(row);
    }
    let mat = nalgebra::DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
    let mut c0 = nalgebra::DVector::zeros(m);
    c0[0] = -split;
    c0[1] = 1.0;
    let scale = mat.abs().max();
    let pinv = mat
        .clone()
        .pseudo_inverse(1e-10 * scale)
        .map_err(|e| Error::Resolution(format!("profile constraints: {e}")))?;
    let c = &c0 - pinv * (&mat * &c0);
    let resid = (&mat * &c).abs().max();
    if resid > 1e-9 * scale {
        return Err(Error::Resolution(format!("profile constraints unsatisfied ({resid:.3e})")));
    }
    Ok(c.iter().copied().collect())
}

/// Antisymmetric `Omega` with `d_a Omega^{ab} = psi f^b`, for `psi` mean zero
/// and invariant along `f`.
pub fn antisymmetric_potential(psi: &ScalarField3, f: usize) -> MatrixField3 {
    let grid = psi.grid;
    let fd = dirf(f);
    let psi_hat = psi.modes();
    let mut out = MatrixField3::zeros(grid);
    for a in 0..3 {
        for b in a + 1..3 {
            let mut m = psi_hat.clone();
            apply_symbol(&grid, &mut m, |k| {
                let ke = effective_k(&grid, k);
                let k2 = dot(ke, ke);
                if k2 == 0.0 {
                    return Complex64::default();
                }
                Complex64::new(0.0, (ke[a] * fd[b] - ke[b] * fd[a]) / (-2.0 * PI * k2))
            });
            let w = ScalarField3::from_modes(grid, m);
            *out.get_mut(b, a) = w.scaled(-1.0);
            *out.get_mut(a, b) = w;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct PipeFamily {
    pub grid: Grid3,
    pub placement: Placement,
    pub profiles: Vec<ScalarField3>,
    pub moment_errors: [f64; 6],
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    grid_n: usize,
    directions: [[i64; 3]; 6],
    offsets: [[f64; 3]; 6],
    r0: f64,
    min_distance: f64,
    seed: u64,
    moment_errors: [f64; 6],
}

impl PipeFamily {
    pub fn build(grid: Grid3, placement: Placement) -> Result<Self> {
        let built: Vec<(ScalarField3, f64)> = (0..6)
            .into_par_iter()
            .map(|f| pipe_profile(grid, f, placement.offsets[f], placement.r0))
            .collect::<Result<_>>()?;
        let moment_errors = std::array::from_fn(|f| built[f].1);
        let profiles = built.into_iter().map(|(p, _)| p).collect();
        Ok(Self { grid, placement, profiles, moment_errors })
    }

    pub fn new(grid: Grid3) -> Result<Self> {
        Self::build(grid, place_pipes(1000, DEFAULT_SEED)?)
    }

    pub fn r0(&self) -> f64 {
        self.placement.r0
    }

    /// `u = sum_f gamma_f psi_f f`.
    pub fn mikado_flow(&self, gammas: &[f64; 6]) -> VectorField3 {
        let mut u = VectorField3::zeros(self.grid);
        for (f, &g) in gammas.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (i, &c) in DIRECTIONS[f].iter().enumerate() {
                if c != 0 {
                    u.c[i].axpy(g * c as f64, &self.profiles[f]);
                }
            }
        }
        u
    }

    /// Antisymmetric `Omega^{ab} = d_a Lap^{-1}[psi f^b] - d_b Lap^{-1}[psi f^a]`,
    /// row-major in a [`MatrixField3`].
    pub fn pipe_antidiv(&self, f: usize) -> MatrixField3 {
        antisymmetric_potential(&self.profiles[f], f)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let refs: Vec<&ScalarField3> = self.profiles.iter().collect();
        write_f3d(&dir.join("pipes.f3d"), &refs, 0.0)?;
        let side = Sidecar {
            grid_n: self.grid.n(),
            directions: DIRECTIONS,
            offsets: self.placement.offsets,
            r0: self.placement.r0,
            min_distance: self.placement.min_distance,
            seed: self.placement.seed,
            moment_errors: self.moment_errors,
        };
        std::fs::write(dir.join("pipes.json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StationarityReport {
    pub u_sup: f64,
    pub div_u: f64,
    /// `div(u (x) u)` with products taken at the collocation points.
    pub div_uu: f64,
    /// `div(u (x) u)` with 3/2-dealiased products.
    pub div_uu_dealiased: f64,
    /// `max |psi_f psi_g|` over grid points and `f != g`, relative to `max psi^2`.
    pub overlap: f64,
    pub mean_uu: [[f64; 3]; 3],
}

/// Divergence of `u (x) u` evaluated with collocated or dealiased products.
fn div_outer(u: &VectorField3, dealias: bool) -> VectorField3 {
    let grid = u.c[0].grid;
    let mut out = VectorField3::zeros(grid);
    for l in 0..3 {
        let row = VectorField3::new(
            prod(&u.c[0], &u.c[l], dealias),
            prod(&u.c[1], &u.c[l], dealias),
            prod(&u.c[2], &u.c[l], dealias),
        );
        out.c[l] = div(&row);
    }
    out
}

fn prod(a: &ScalarField3, b: &ScalarField3, dealias: bool) -> ScalarField3 {
    if dealias { a.mul(b) } else { a.mul_collocated(b) }
}

pub fn stationarity(family: &PipeFamily, gammas: &[f64; 6]) -> StationarityReport {
    let u = family.mikado_flow(gammas);
    let sup_of = |v: &VectorField3| {
        (0..v.c[0].data.len()).map(|i| dot(v.at(i), v.at(i)).sqrt()).fold(0.0, f64::max)
    };
    let u_sup = sup_of(&u);
    let div_u = div(&u).max_abs();
    let div_uu = sup_of(&div_outer(&u, false));
    let div_uu_dealiased = sup_of(&div_outer(&u, true));
    let mut overlap: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for f in 0..6 {
        peak = peak.max(family.profiles[f].max_abs().powi(2));
        for g in f + 1..6 {
            let o = family.profiles[f].mul_collocated(&family.profiles[g]).max_abs();
            overlap = overlap.max(o);
        }
    }
    let mut mean_uu = [[0.0; 3]; 3];
    for j in 0..3 {
        for l in 0..3 {
            mean_uu[j][l] = u.c[j].mul_collocated(&u.c[l]).mean();
        }
    }
    StationarityReport {
        u_sup,
        div_u,
        div_uu,
        div_uu_dealiased,
        overlap: if peak > 0.0 { overlap / peak } else { 0.0 },
        mean_uu,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_directions_and_identity() {
        assert_eq!(DIRECTIONS.len(), 6);
        assert_eq!(direction_outer_sum(), [[4, 0, 0], [0, 4, 0], [0, 0, 4]]);
        let g: Vec<Vec<i64>> = gram_matrix().iter().map(|r| r.to_vec()).collect();
        assert_ne!(det_i64(&g), 0);
    }

    #[test]
    fn basis_coefficients_roundtrip() {
        let a = [[1.3, 0.2, -0.4], [0.2, 0.9, 0.1], [-0.4, 0.1, 1.1]];
        let c = basis_coefficients(&a);
        for j in 0..3 {
            for l in 0..3 {
                let s: f64 = (0..6).map(|f| c[f] * (DIRECTIONS[f][j] * DIRECTIONS[f][l]) as f64).sum();
                assert!((s - a[j][l]).abs() < 1e-14);
            }
        }
        let id = basis_coefficients(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(id.iter().all(|&c| (c - 0.25).abs() < 1e-15));
    }

    #[test]
    fn skew_distance_matches_oracle() {
        let p = [0.1, 0.2, 0.3];
        let q = [0.55, 0.05, 0.71];
        let exact = line_distance(p, 0, q, 2);
        let mut oracle = f64::INFINITY;
        for i in 0..20000 {
            let s = i as f64 / 20000.0;
            let x = [p[0] + s, p[1] + s, p[2]];
            oracle = oracle.min(point_line_distance(x, q, 2));
        }
        assert!(oracle >= exact - 1e-12);
        assert!(oracle - exact < 1e-3, "{oracle} {exact}");
    }

    #[test]
    fn placement_properties() {
        let pl = place_pipes(1000, DEFAULT_SEED).unwrap();
        assert!(pl.r0 > 0.0);
        assert!(pl.sampled_min_distance >= 6.0 * pl.r0);
        let shift = [0.25, 0.5, 0.125];
        let moved: [[f64; 3]; 6] = std::array::from_fn(|f| std::array::from_fn(|i| pl.offsets[f][i] + shift[i]));
        assert!((min_pair_distance(&moved) - pl.min_distance).abs() < 1e-12);
        assert!(place_pipes(10, 1).is_err());
    }

    #[test]
    fn continuum_split_in_annulus() {
        let s = continuum_split();
        assert!(s > 0.5 && s < 0.55, "{s}");
    }
}
