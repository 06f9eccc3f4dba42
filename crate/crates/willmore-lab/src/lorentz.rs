//! Lorentz norms through the non-increasing rearrangement, and an empirical
//! Wente-constant harness.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::diskgrid::{self, Field, Grid, GridError};

#[derive(Debug, Error)]
pub enum LorentzError {
    #[error("invalid exponent: {0}")]
    Param(String),
    #[error("non-finite sample at node {0}")]
    NonFinite(usize),
    #[error("weights and values differ in length")]
    Shape,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Non-increasing rearrangement of `|f|` as a step function: value `fstar[k]`
/// on `(t_samples[k-1], t_samples[k]]`, with `t_samples[-1] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedProfile {
    pub t_samples: Vec<f64>,
    pub fstar: Vec<f64>,
    /// `f**` at the right end of each step.
    pub fstarstar: Vec<f64>,
}

impl RearrangedProfile {
    pub fn total_measure(&self) -> f64 {
        self.t_samples.last().copied().unwrap_or(0.0)
    }

    /// `f*(t)`, right-continuous convention `f*(t) = inf{s : mu{|f| > s} <= t}`.
    pub fn fstar_at(&self, t: f64) -> f64 {
        let k = self.t_samples.partition_point(|&x| x <= t);
        self.fstar.get(k).copied().unwrap_or(0.0)
    }

    /// `f**(t) = (1/t) int_0^t f*`.
    pub fn fstarstar_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.fstar.first().copied().unwrap_or(0.0);
        }
        let k = self.t_samples.partition_point(|&x| x < t);
        if k >= self.t_samples.len() {
            return self.fstarstar.last().map_or(0.0, |v| v * self.total_measure() / t);
        }
        let (t0, f0) = if k == 0 { (0.0, 0.0) } else { (self.t_samples[k - 1], self.fstarstar[k - 1] * self.t_samples[k - 1]) };
        (f0 + self.fstar[k] * (t - t0)) / t
    }

    /// Measure of `{|f| >= s}`.
    pub fn level_measure(&self, s: f64) -> f64 {
        let k = self.fstar.partition_point(|&v| v >= s);
        if k == 0 { 0.0 } else { self.t_samples[k - 1] }
    }
}

/// Trapezoidal node weights; interior nodes carry the cell area `h^2`.
pub fn node_weights(g: &Grid) -> Vec<f64> {
    let n = g.n();
    let h2 = g.h() * g.h();
    (0..g.len())
        .map(|k| {
            let (i, j) = (k % n, k / n);
            let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            wi * wj * h2
        })
        .collect()
}

/// Rearrangement of weighted samples; entries with weight 0 are dropped.
pub fn rearrange_weighted(values: &[f64], weights: &[f64]) -> Result<RearrangedProfile, LorentzError> {
    if values.len() != weights.len() {
        return Err(LorentzError::Shape);
    }
    let mut pairs = Vec::with_capacity(values.len());
    for (k, (&v, &w)) in values.iter().zip(weights).enumerate() {
        if !v.is_finite() || !w.is_finite() || w < 0.0 {
            return Err(LorentzError::NonFinite(k));
        }
        if w > 0.0 {
            pairs.push((v.abs(), w));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut t_samples = Vec::with_capacity(pairs.len());
    let mut fstar = Vec::with_capacity(pairs.len());
    let mut fstarstar = Vec::with_capacity(pairs.len());
    let (mut t, mut mass) = (0.0, 0.0);
    for (v, w) in pairs {
        t += w;
        mass += v * w;
        t_samples.push(t);
        fstar.push(v);
        fstarstar.push(mass / t);
    }
    Ok(RearrangedProfile { t_samples, fstar, fstarstar })
}

pub fn rearrange(f: &Field) -> Result<RearrangedProfile, LorentzError> {
    rearrange_weighted(f.data(), &node_weights(f.grid()))
}

/// Rearrangement with the nodes where `exclude` holds removed from the domain.
pub fn rearrange_excluding(f: &Field, exclude: impl Fn(usize) -> bool) -> Result<RearrangedProfile, LorentzError> {
    let w: Vec<f64> = node_weights(f.grid()).into_iter().enumerate().map(|(k, w)| if exclude(k) { 0.0 } else { w }).collect();
    let v: Vec<f64> = f.data().iter().enumerate().map(|(k, &v)| if exclude(k) { 0.0 } else { v }).collect();
    rearrange_weighted(&v, &w)
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn check_exponents(p: f64, q: f64) -> Result<(), LorentzError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(LorentzError::Param(format!("p = {p} not in (1, inf)")));
    }
    if !(q >= 1.0) {
        return Err(LorentzError::Param(format!("q = {q} not in [1, inf]")));
    }
    Ok(())
}

/// `|| t^{1/p} f** ||_{L^q(dt/t)}`. `q = f64::INFINITY` gives `sup_t t^{1/p} f**(t)`.
///
/// On each step `t f**(t)` is affine, `a + v t`, so the `q = inf` branch is
/// exact and finite `q` uses five-point Gauss-Legendre per step (exact on the
/// first step).
pub fn lorentz_norm(profile: &RearrangedProfile, p: f64, q: f64) -> Result<f64, LorentzError> {
    check_exponents(p, q)?;
    let ip = 1.0 / p;
    let mut t0 = 0.0;
    let mut mass0 = 0.0;
    if q.is_infinite() {
        let mut sup = 0.0f64;
        for (&t1, &v) in profile.t_samples.iter().zip(&profile.fstar) {
            let a = mass0 - v * t0;
            let g = |t: f64| if t > 0.0 { t.powf(ip - 1.0) * (a + v * t) } else { 0.0 };
            sup = sup.max(g(t1));
            if v > 0.0 {
                let tc = a * (p - 1.0) / v;
                if tc > t0 && tc < t1 {
                    sup = sup.max(g(tc));
                }
            }
            if t0 > 0.0 {
                sup = sup.max(g(t0));
            }
            mass0 += v * (t1 - t0);
            t0 = t1;
        }
        return Ok(sup);
    }
    let mut acc = 0.0;
    for (&t1, &v) in profile.t_samples.iter().zip(&profile.fstar) {
        if t0 == 0.0 {
            acc += v.powf(q) * t1.powf(q * ip) * p / q;
        } else {
            let a = mass0 - v * t0;
            let (mid, half) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
            for (x, w) in GAUSS5 {
                let t = mid + half * x;
                acc += w * half * t.powf(q * ip - 1.0 - q) * (a + v * t).powf(q);
            }
        }
        mass0 += v * (t1 - t0);
        t0 = t1;
    }
    Ok(acc.powf(1.0 / q))
}

/// Plain discrete `L^2` norm with trapezoidal weights.
pub fn l2_norm(f: &Field) -> f64 {
    f.data().iter().zip(node_weights(f.grid())).map(|(v, w)| v * v * w).sum::<f64>().sqrt()
}

/// Upper bound for `int |x|^{-1}` over the square cell of side `2r` centred at
/// the origin, `8 r asinh(1)`.
pub fn inverse_radius_cell_bound(r: f64) -> f64 {
    8.0 * r * 1f64.asinh()
}

#[derive(Debug, Clone)]
pub struct WenteResult {
    pub u: Field,
    pub ratio_l2: f64,
    pub ratio_l21: f64,
    /// A denominator vanished and the ratio was reported as 0.
    pub degenerate: bool,
}

fn grad_l2(g: &[Field; 2]) -> f64 {
    let w = node_weights(g[0].grid());
    (0..w.len()).map(|k| (g[0].data()[k].powi(2) + g[1].data()[k].powi(2)) * w[k]).sum::<f64>().sqrt()
}

fn grad_magnitude(g: &[Field; 2]) -> Field {
    g[0].zip_map(&g[1], |a, b| a.hypot(b))
}

/// Solves `Delta u = grad a . grad_perp b`, `u = 0` on the boundary, and
/// reports `||grad u||_2 / (||grad a||_2 ||grad b||_{2,inf})` and
/// `||grad u||_{2,1} / (||grad a||_2 ||grad b||_2)`.
pub fn wente_solve(a: &Field, b: &Field) -> Result<WenteResult, LorentzError> {
    let ga = diskgrid::grad(a);
    let gb = diskgrid::grad_perp(b);
    let rhs = &ga[0].zip_map(&gb[0], |x, y| x * y) + &ga[1].zip_map(&gb[1], |x, y| x * y);
    let (u, _) = diskgrid::poisson_dirichlet(&rhs, &Field::zeros(*a.grid()))?;
    let gu = diskgrid::grad(&u);
    let gb_full = diskgrid::grad(b);
    let na = grad_l2(&ga);
    let nb2 = grad_l2(&gb_full);
    let nb_weak = lorentz_norm(&rearrange(&grad_magnitude(&gb_full))?, 2.0, f64::INFINITY)?;
    let nu = grad_l2(&gu);
    let nu21 = lorentz_norm(&rearrange(&gu[0])?, 2.0, 1.0)? + lorentz_norm(&rearrange(&gu[1])?, 2.0, 1.0)?;
    let tiny = 1e-300;
    let d1 = na * nb_weak;
    let d2 = na * nb2;
    let degenerate = d1 <= tiny || d2 <= tiny;
    let ratio = |num: f64, den: f64| if den <= tiny { 0.0 } else { num / den };
    Ok(WenteResult { u, ratio_l2: ratio(nu, d1), ratio_l21: ratio(nu21, d2), degenerate })
}

/// Highest frequency of the random pairs.
pub const BAND: usize = 4;

/// Seeded pair of trigonometric polynomials on the grid square with
/// frequencies up to [`BAND`] and coefficients decaying like `1/(1+|k|^2)`.
pub fn random_pair(grid: Grid, seed: u64) -> (Field, Field) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let mut terms = Vec::new();
        for k1 in 0..=BAND {
            for k2 in 0..=BAND {
                if k1 + k2 == 0 {
                    continue;
                }
                let decay = 1.0 / (1.0 + (k1 * k1 + k2 * k2) as f64);
                let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0) * decay);
                terms.push((k1 as f64, k2 as f64, c));
            }
        }
        terms
    };
    let (ta, tb) = (draw(), draw());
    let s = grid.s();
    let eval = |terms: &[(f64, f64, [f64; 4])]| {
        Field::from_fn(grid, |x, y| {
            let (u, v) = (std::f64::consts::PI * x / s, std::f64::consts::PI * y / s);
            terms
                .iter()
                .map(|(k1, k2, c)| {
                    let (s1, c1) = (k1 * u).sin_cos();
                    let (s2, c2) = (k2 * v).sin_cos();
                    c[0] * c1 * c2 + c[1] * c1 * s2 + c[2] * s1 * c2 + c[3] * s1 * s2
                })
                .sum()
        })
    };
    (eval(&ta), eval(&tb))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WenteSample {
    pub seed: u64,
    pub ratio_l2: f64,
    pub ratio_l21: f64,
    pub n: usize,
    pub degenerate: bool,
}

impl WenteSample {
    pub fn finite(&self) -> bool {
        self.ratio_l2.is_finite() && self.ratio_l21.is_finite()
    }
}

/// Runs [`wente_solve`] on [`random_pair`] for every seed, in parallel.
pub fn wente_batch(grid: Grid, seeds: &[u64]) -> Result<Vec<WenteSample>, LorentzError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let (a, b) = random_pair(grid, seed);
            let r = wente_solve(&a, &b)?;
            Ok(WenteSample { seed, ratio_l2: r.ratio_l2, ratio_l21: r.ratio_l21, n: grid.n(), degenerate: r.degenerate })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_profile() {
        let g = Grid::new(0.5, 33).unwrap();
        let f = Field::from_fn(g, |_, _| -3.0);
        let p = rearrange(&f).unwrap();
        assert!(p.fstar.iter().all(|&v| v == 3.0));
        assert!((p.total_measure() - 1.0).abs() < 1e-14);
        // ||c||_{2,inf} = sup t^{1/2} c = c |U|^{1/2}
        assert!((lorentz_norm(&p, 2.0, f64::INFINITY).unwrap() - 3.0).abs() < 1e-13);
        // ||c||_{2,2} = (int_0^|U| c^2 dt)^{1/2}
        assert!((lorentz_norm(&p, 2.0, 2.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn half_indicator() {
        let w = vec![0.25; 8];
        let v = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let p = rearrange_weighted(&v, &w).unwrap();
        assert_eq!(p.fstar_at(0.5), 1.0);
        assert_eq!(p.fstar_at(1.0), 0.0);
        assert_eq!(p.fstar_at(1.9), 0.0);
        assert!((p.level_measure(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parameter_errors() {
        let p = rearrange_weighted(&[1.0], &[1.0]).unwrap();
        assert!(lorentz_norm(&p, 1.0, 2.0).is_err());
        assert!(lorentz_norm(&p, 2.0, 0.5).is_err());
        assert!(lorentz_norm(&p, f64::INFINITY, 2.0).is_err());
    }

    #[test]
    fn constant_a_gives_zero_ratios() {
        let g = Grid::new(0.5, 33).unwrap();
        let a = Field::from_fn(g, |_, _| 2.0);
        let b = Field::from_fn(g, |x, y| x * y);
        let r = wente_solve(&a, &b).unwrap();
        assert_eq!(r.u.max_abs(), 0.0);
        assert_eq!((r.ratio_l2, r.ratio_l21), (0.0, 0.0));
        assert!(r.degenerate);
    }

    #[test]
    fn parallel_linear_gradients_have_vanishing_jacobian() {
        let g = Grid::new(0.5, 33).unwrap();
        let a = Field::from_fn(g, |x, y| x + 2.0 * y);
        let b = Field::from_fn(g, |x, y| -3.0 * x - 6.0 * y);
        let r = wente_solve(&a, &b).unwrap();
        assert!(r.u.max_abs() < 1e-13);
        assert_eq!(r.ratio_l2, 0.0);
    }

    #[test]
    fn coordinate_pair_has_unit_jacobian() {
        // grad x . grad_perp y = (1, 0) . (-1, 0)
        let g = Grid::new(0.5, 33).unwrap();
        let a = Field::from_fn(g, |x, _| x);
        let b = Field::from_fn(g, |_, y| y);
        let r = wente_solve(&a, &b).unwrap();
        let lap = diskgrid::laplace5(&r.u);
        assert!(g.window(1).all(|k| (lap.data()[k] + 1.0).abs() < 1e-6));
        assert!(r.ratio_l2 > 0.0 && !r.degenerate);
    }
}
