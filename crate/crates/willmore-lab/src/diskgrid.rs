//! Uniform grids on a square inside the unit disk, second-order finite
//! differences, and Poisson solvers.
//!
//! Node `(i, j)` sits at `x1 = -s + i h`, `x2 = -s + j h`; storage is
//! row-major with `j` as the row index, so `idx = j * n + i`.

use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid size n = {0} must be odd and at least 33")]
    BadSize(usize),
    #[error("half-width s = {0} must satisfy 0 < s <= 1/sqrt(2)")]
    BadHalfWidth(f64),
    #[error("field shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value at node ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("solver did not converge after {sweeps} sweeps (relative residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed field file: {0}")]
    Format(String),
}

pub const SOLVER_TOL: f64 = 1e-10;
pub const SOLVER_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    s: f64,
    h: f64,
}

impl Grid {
    pub fn new(s: f64, n: usize) -> Result<Grid, GridError> {
        if n < 33 || n % 2 == 0 {
            return Err(GridError::BadSize(n));
        }
        if !(s > 0.0 && s <= std::f64::consts::FRAC_1_SQRT_2 + 1e-15) {
            return Err(GridError::BadHalfWidth(s));
        }
        Ok(Grid { n, s, h: 2.0 * s / (n - 1) as f64 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.s + i as f64 * self.h
    }

    #[inline]
    pub fn point(&self, k: usize) -> (f64, f64) {
        (self.coord(k % self.n), self.coord(k / self.n))
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1
    }

    /// Node indices at distance at least `offset` cells from every edge.
    pub fn window(&self, offset: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n;
        (offset..n - offset).flat_map(move |j| (offset..n - offset).map(move |i| j * n + i))
    }

    pub fn area(&self) -> f64 {
        4.0 * self.s * self.s
    }
}

/// Interior window used by every identity check.
pub const INTERIOR: usize = 2;

pub trait Value:
    Copy
    + Default
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Mul<f64, Output = Self>
{
    fn mag(self) -> f64;
    fn finite(self) -> bool;
}

impl Value for f64 {
    fn mag(self) -> f64 {
        self.abs()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Value for Complex64 {
    fn mag(self) -> f64 {
        self.norm()
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Samples of a value type on every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T = f64> {
    grid: Grid,
    data: Vec<T>,
}

pub type CField = Field<Complex64>;

impl<T: Value> Field<T> {
    pub fn zeros(grid: Grid) -> Field<T> {
        Field { grid, data: vec![T::default(); grid.len()] }
    }

    pub fn from_vec(grid: Grid, data: Vec<T>) -> Result<Field<T>, GridError> {
        if data.len() != grid.len() {
            return Err(GridError::Shape { expected: grid.len(), got: data.len() });
        }
        Ok(Field { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> T) -> Field<T> {
        let data = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        Field { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[self.grid.idx(i, j)]
    }

    pub fn map<U: Value>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<U: Value, V: Value>(&self, other: &Field<U>, f: impl Fn(T, U) -> V) -> Field<V> {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Field { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        for (k, v) in self.data.iter().enumerate() {
            if !v.finite() {
                return Err(GridError::NonFinite { i: k % self.grid.n, j: k / self.grid.n });
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.mag()))
    }

    pub fn max_abs_window(&self, offset: usize) -> f64 {
        self.grid.window(offset).fold(0.0, |a, k| a.max(self.data[k].mag()))
    }

    /// Discrete L2 norm over the window, cell weight `h^2`.
    pub fn l2_window(&self, offset: usize) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        (self.grid.window(offset).map(|k| self.data[k].mag().powi(2)).sum::<f64>() * h2).sqrt()
    }

    /// Trapezoidal integral over the full square.
    pub fn integrate(&self) -> T {
        let n = self.grid.n;
        let h2 = self.grid.h * self.grid.h;
        let mut acc = T::default();
        for j in 0..n {
            let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            for i in 0..n {
                let wi = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                acc += self.data[j * n + i] * (wi * wj * h2);
            }
        }
        acc
    }
}

impl Field<f64> {
    pub fn to_complex(&self) -> CField {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.area()
    }
}

impl CField {
    pub fn re(&self) -> Field {
        self.map(|v| v.re)
    }

    pub fn im(&self) -> Field {
        self.map(|v| v.im)
    }
}

impl<T: Value> Add for &Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: &Field<T>) -> Field<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Value> Sub for &Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: &Field<T>) -> Field<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Value> Mul<f64> for &Field<T> {
    type Output = Field<T>;
    fn mul(self, rhs: f64) -> Field<T> {
        self.map(|a| a * rhs)
    }
}

impl<T: Value> Neg for &Field<T> {
    type Output = Field<T>;
    fn neg(self) -> Field<T> {
        self.map(|a| -a)
    }
}

/// Pointwise product of a real field with any value field.
pub fn scale_by<T: Value>(w: &Field, f: &Field<T>) -> Field<T> {
    f.zip_map(w, |v, s| v * s)
}

// ---------------------------------------------------------------------------
// difference operators

#[inline]
fn diff_line<T: Value>(src: &[T], stride: usize, base: usize, n: usize, inv2h: f64, out: &mut [T]) {
    let at = |i: usize| src[base + i * stride];
    out[base] = (at(1) * 4.0 - at(0) * 3.0 - at(2)) * inv2h;
    for i in 1..n - 1 {
        out[base + i * stride] = (at(i + 1) - at(i - 1)) * inv2h;
    }
    out[base + (n - 1) * stride] = (at(n - 1) * 3.0 - at(n - 2) * 4.0 + at(n - 3)) * inv2h;
}

/// Partial derivative along `x1`.
pub fn d1<T: Value>(f: &Field<T>) -> Field<T> {
    let g = f.grid;
    let mut out = vec![T::default(); g.len()];
    let inv2h = 0.5 / g.h;
    for j in 0..g.n {
        diff_line(&f.data, 1, j * g.n, g.n, inv2h, &mut out);
    }
    Field { grid: g, data: out }
}

/// Partial derivative along `x2`.
pub fn d2<T: Value>(f: &Field<T>) -> Field<T> {
    let g = f.grid;
    let mut out = vec![T::default(); g.len()];
    let inv2h = 0.5 / g.h;
    for i in 0..g.n {
        diff_line(&f.data, g.n, i, g.n, inv2h, &mut out);
    }
    Field { grid: g, data: out }
}

/// Adjoint of [`d1`] with respect to the plain Euclidean node inner product.
pub fn d1_adjoint(f: &Field) -> Field {
    diff_adjoint(f, 1)
}

/// Adjoint of [`d2`] with respect to the plain Euclidean node inner product.
pub fn d2_adjoint(f: &Field) -> Field {
    diff_adjoint(f, 2)
}

fn diff_adjoint(f: &Field, axis: u8) -> Field {
    let g = f.grid;
    let n = g.n;
    let inv2h = 0.5 / g.h;
    let mut out = vec![0.0; g.len()];
    for line in 0..n {
        let (base, stride) = if axis == 1 { (line * n, 1) } else { (line, n) };
        let p = |i: usize| base + i * stride;
        let y0 = f.data[p(0)] * inv2h;
        out[p(0)] -= 3.0 * y0;
        out[p(1)] += 4.0 * y0;
        out[p(2)] -= y0;
        for i in 1..n - 1 {
            let y = f.data[p(i)] * inv2h;
            out[p(i + 1)] += y;
            out[p(i - 1)] -= y;
        }
        let yl = f.data[p(n - 1)] * inv2h;
        out[p(n - 1)] += 3.0 * yl;
        out[p(n - 2)] -= 4.0 * yl;
        out[p(n - 3)] += yl;
    }
    Field { grid: g, data: out }
}

pub fn grad<T: Value>(f: &Field<T>) -> [Field<T>; 2] {
    [d1(f), d2(f)]
}

/// `(-d2 f, d1 f)`
pub fn grad_perp<T: Value>(f: &Field<T>) -> [Field<T>; 2] {
    [-&d2(f), d1(f)]
}

pub fn div<T: Value>(g: &[Field<T>; 2]) -> Field<T> {
    &d1(&g[0]) + &d2(&g[1])
}

/// `d1 g2 - d2 g1`
pub fn curl<T: Value>(g: &[Field<T>; 2]) -> Field<T> {
    &d1(&g[1]) - &d2(&g[0])
}

/// Composite Laplacian `div(grad f)`.
pub fn laplace<T: Value>(f: &Field<T>) -> Field<T> {
    &d1(&d1(f)) + &d2(&d2(f))
}

/// Five-point Laplacian; edge rows use one-sided second-order second differences.
pub fn laplace5(f: &Field) -> Field {
    let g = f.grid;
    let n = g.n;
    let ih2 = 1.0 / (g.h * g.h);
    let mut out = vec![0.0; g.len()];
    let second = |get: &dyn Fn(usize) -> f64, i: usize| -> f64 {
        if i == 0 {
            2.0 * get(0) - 5.0 * get(1) + 4.0 * get(2) - get(3)
        } else if i == n - 1 {
            2.0 * get(n - 1) - 5.0 * get(n - 2) + 4.0 * get(n - 3) - get(n - 4)
        } else {
            get(i + 1) - 2.0 * get(i) + get(i - 1)
        }
    };
    for j in 0..n {
        for i in 0..n {
            let row = |ii: usize| f.data[j * n + ii];
            let col = |jj: usize| f.data[jj * n + i];
            out[j * n + i] = (second(&row, i) + second(&col, j)) * ih2;
        }
    }
    Field { grid: g, data: out }
}

/// `d_z = (d1 - i d2) / 2`
pub fn d_z(f: &CField) -> CField {
    let a = d1(f);
    let b = d2(f);
    a.zip_map(&b, |x, y| (x - Complex64::i() * y) * 0.5)
}

/// `d_zstar = (d1 + i d2) / 2`
pub fn d_zstar(f: &CField) -> CField {
    let a = d1(f);
    let b = d2(f);
    a.zip_map(&b, |x, y| (x + Complex64::i() * y) * 0.5)
}

// ---------------------------------------------------------------------------
// Poisson solvers

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub sweeps: usize,
    pub relative_residual: f64,
}

fn sor_omega(n: usize) -> f64 {
    2.0 / (1.0 + (std::f64::consts::PI / (n - 1) as f64).sin())
}

/// Solves the five-point problem `laplace5(u) = rhs` at interior nodes with
/// `u = bc` on the boundary, by red-black SOR.
pub fn poisson_dirichlet(rhs: &Field, bc: &Field) -> Result<(Field, SolveReport), GridError> {
    rhs.check_finite()?;
    bc.check_finite()?;
    assert_eq!(rhs.grid, bc.grid, "grid mismatch");
    let g = rhs.grid;
    let n = g.n;
    let h2 = g.h * g.h;
    let mut u = vec![0.0; g.len()];
    for j in 0..n {
        for i in 0..n {
            if g.is_boundary(i, j) {
                u[j * n + i] = bc.data[j * n + i];
            }
        }
    }
    let resid = |u: &[f64]| -> f64 {
        let mut r = 0.0f64;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = j * n + i;
                let lap = (u[k - 1] + u[k + 1] + u[k - n] + u[k + n] - 4.0 * u[k]) / h2;
                r = r.max((lap - rhs.data[k]).abs());
            }
        }
        r
    };
    let r0 = resid(&u);
    if r0 == 0.0 {
        return Ok((Field { grid: g, data: u }, SolveReport { sweeps: 0, relative_residual: 0.0 }));
    }
    let omega = sor_omega(n);
    let mut sweeps = 0;
    loop {
        for color in 0..2 {
            for j in 1..n - 1 {
                let start = 1 + (j + 1 + color) % 2;
                let mut i = start;
                while i < n - 1 {
                    let k = j * n + i;
                    let gs = 0.25 * (u[k - 1] + u[k + 1] + u[k - n] + u[k + n] - h2 * rhs.data[k]);
                    u[k] += omega * (gs - u[k]);
                    i += 2;
                }
            }
        }
        sweeps += 1;
        if sweeps % 10 == 0 || sweeps == SOLVER_MAX_SWEEPS {
            let rel = resid(&u) / r0;
            if rel <= SOLVER_TOL {
                return Ok((Field { grid: g, data: u }, SolveReport { sweeps, relative_residual: rel }));
            }
            if sweeps >= SOLVER_MAX_SWEEPS || !rel.is_finite() {
                return Err(GridError::NoConvergence { sweeps, residual: rel });
            }
        }
    }
}

/// Outward normal derivative data on the four edges, indexed along each edge
/// by the free node index (`j` on the left/right edges, `i` on bottom/top).
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannData {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
}

impl NeumannData {
    pub fn zero(n: usize) -> NeumannData {
        NeumannData { left: vec![0.0; n], right: vec![0.0; n], bottom: vec![0.0; n], top: vec![0.0; n] }
    }

    /// Outward flux `G . nu` of a vector field on each edge.
    pub fn normal_flux(g: &[Field; 2]) -> NeumannData {
        let gr = g[0].grid;
        let n = gr.n;
        let mut d = NeumannData::zero(n);
        for t in 0..n {
            d.left[t] = -g[0].at(0, t);
            d.right[t] = g[0].at(n - 1, t);
            d.bottom[t] = -g[1].at(t, 0);
            d.top[t] = g[1].at(t, n - 1);
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub u: Field,
    /// `int rhs - oint flux` before the consistency projection.
    pub compat_defect: f64,
    /// Set when the compatibility defect exceeds `1e-6` relative to the data scale.
    pub compat_warning: bool,
    pub report: SolveReport,
}

fn trap_weight(n: usize, i: usize) -> f64 {
    if i == 0 || i == n - 1 { 0.5 } else { 1.0 }
}

/// Solves `laplace5(u) = rhs` with outward normal derivative data through
/// second-order ghost nodes; `u` is normalized to zero mean.
pub fn poisson_neumann(rhs: &Field, flux: &NeumannData) -> Result<NeumannSolution, GridError> {
    rhs.check_finite()?;
    let g = rhs.grid;
    let n = g.n;
    let h = g.h;
    let h2 = h * h;
    // effective right-hand side with ghost contributions
    let mut b = rhs.data.clone();
    for t in 0..n {
        b[g.idx(0, t)] -= 2.0 * flux.left[t] / h;
        b[g.idx(n - 1, t)] -= 2.0 * flux.right[t] / h;
        b[g.idx(t, 0)] -= 2.0 * flux.bottom[t] / h;
        b[g.idx(t, n - 1)] -= 2.0 * flux.top[t] / h;
    }
    let w = |i: usize, j: usize| trap_weight(n, i) * trap_weight(n, j);
    let mut total_w = 0.0;
    let mut defect_sum = 0.0;
    let mut scale = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let k = g.idx(i, j);
            total_w += w(i, j);
            defect_sum += w(i, j) * b[k];
            scale = scale.max(rhs.data[k].abs());
        }
    }
    for t in 0..n {
        scale = scale.max(flux.left[t].abs().max(flux.right[t].abs()).max(flux.bottom[t].abs()).max(flux.top[t].abs()) / h);
    }
    let compat_defect = defect_sum * h2;
    let shift = defect_sum / total_w;
    for v in b.iter_mut() {
        *v -= shift;
    }
    let compat_warning = compat_defect.abs() > 1e-6 * scale.max(1e-300) * g.area();

    let coef = |i: usize, up: bool| -> f64 {
        // weight of the neighbour in direction `up` for node index i
        if up {
            if i == n - 1 { 0.0 } else if i == 0 { 2.0 } else { 1.0 }
        } else if i == 0 {
            0.0
        } else if i == n - 1 {
            2.0
        } else {
            1.0
        }
    };
    let apply = |u: &[f64], i: usize, j: usize| -> f64 {
        let k = j * n + i;
        let mut s = 0.0;
        if i + 1 < n {
            s += coef(i, true) * u[k + 1];
        }
        if i > 0 {
            s += coef(i, false) * u[k - 1];
        }
        if j + 1 < n {
            s += coef(j, true) * u[k + n];
        }
        if j > 0 {
            s += coef(j, false) * u[k - n];
        }
        s
    };
    let resid = |u: &[f64]| -> f64 {
        let mut r = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                r = r.max(((apply(u, i, j) - 4.0 * u[k]) / h2 - b[k]).abs());
            }
        }
        r
    };
    let mut u = vec![0.0; g.len()];
    let r0 = resid(&u);
    let finish = |mut u: Vec<f64>, report: SolveReport| -> NeumannSolution {
        let mut f = Field { grid: g, data: std::mem::take(&mut u) };
        let m = f.mean();
        for v in f.data.iter_mut() {
            *v -= m;
        }
        NeumannSolution { u: f, compat_defect, compat_warning, report }
    };
    if r0 == 0.0 {
        return Ok(finish(u, SolveReport { sweeps: 0, relative_residual: 0.0 }));
    }
    let omega = sor_omega(n);
    let mut sweeps = 0;
    loop {
        for color in 0..2 {
            for j in 0..n {
                let mut i = (j + color) % 2;
                while i < n {
                    let k = j * n + i;
                    let gs = 0.25 * (apply(&u, i, j) - h2 * b[k]);
                    u[k] += omega * (gs - u[k]);
                    i += 2;
                }
            }
        }
        sweeps += 1;
        if sweeps % 10 == 0 || sweeps == SOLVER_MAX_SWEEPS {
            let rel = resid(&u) / r0;
            if rel <= SOLVER_TOL {
                return Ok(finish(u, SolveReport { sweeps, relative_residual: rel }));
            }
            if sweeps >= SOLVER_MAX_SWEEPS || !rel.is_finite() {
                return Err(GridError::NoConvergence { sweeps, residual: rel });
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurlPotential {
    pub l: Field,
    /// `|| grad_perp L - G ||_{L2}` over the interior window.
    pub defect: f64,
    pub compat_defect: f64,
    pub compat_warning: bool,
}

/// Potential `L` with `grad_perp L ~ G`: solves `laplace L = curl G` with
/// `d_nu L = G . tau`, `tau` the counter-clockwise boundary tangent.
pub fn curl_potential(g: &[Field; 2]) -> Result<CurlPotential, GridError> {
    let rhs = curl(g);
    // G . tau = (G2, -G1) . nu
    let rotated = [g[1].clone(), -&g[0]];
    let flux = NeumannData::normal_flux(&rotated);
    let sol = poisson_neumann(&rhs, &flux)?;
    let gp = grad_perp(&sol.u);
    let e0 = &gp[0] - &g[0];
    let e1 = &gp[1] - &g[1];
    let defect = (e0.l2_window(INTERIOR).powi(2) + e1.l2_window(INTERIOR).powi(2)).sqrt();
    Ok(CurlPotential { l: sol.u, defect, compat_defect: sol.compat_defect, compat_warning: sol.compat_warning })
}

/// Potential `U` with `grad U ~ G`: solves `laplace U = div G` with
/// `d_nu U = G . nu`. The defect field is `|| grad U - G ||_{L2}`.
pub fn grad_potential(g: &[Field; 2]) -> Result<CurlPotential, GridError> {
    let sol = poisson_neumann(&div(g), &NeumannData::normal_flux(g))?;
    let gu = grad(&sol.u);
    let e0 = &gu[0] - &g[0];
    let e1 = &gu[1] - &g[1];
    let defect = (e0.l2_window(INTERIOR).powi(2) + e1.l2_window(INTERIOR).powi(2)).sqrt();
    Ok(CurlPotential { l: sol.u, defect, compat_defect: sol.compat_defect, compat_warning: sol.compat_warning })
}

#[derive(Debug, Clone)]
pub struct Hodge {
    pub alpha: Field,
    pub beta: Field,
    pub harmonic: [Field; 2],
}

/// `g = grad(alpha) + grad_perp(beta) + h` with `alpha`, `beta` vanishing on the boundary.
pub fn hodge_decompose(g: &[Field; 2]) -> Result<Hodge, GridError> {
    let zero = Field::zeros(g[0].grid);
    let (alpha, _) = poisson_dirichlet(&div(g), &zero)?;
    let (beta, _) = poisson_dirichlet(&curl(g), &zero)?;
    let ga = grad(&alpha);
    let gb = grad_perp(&beta);
    let harmonic = [&(&g[0] - &ga[0]) - &gb[0], &(&g[1] - &ga[1]) - &gb[1]];
    Ok(Hodge { alpha, beta, harmonic })
}

impl Hodge {
    /// Interior sup of `|div h|` and `|curl h|`.
    pub fn harmonicity_residual(&self) -> f64 {
        div(&self.harmonic).max_abs_window(INTERIOR).max(curl(&self.harmonic).max_abs_window(INTERIOR))
    }

    /// Sup of `|div h|` and `|curl h|` over the inner square `max |x_i| <= s/2`,
    /// away from the corner singularities of the potentials.
    pub fn harmonicity_residual_inner(&self) -> f64 {
        let g = self.harmonic[0].grid;
        let (d, c) = (div(&self.harmonic), curl(&self.harmonic));
        (0..g.len())
            .filter(|&k| {
                let (x, y) = g.point(k);
                x.abs().max(y.abs()) <= 0.5 * g.s() + 1e-12
            })
            .fold(0.0, |acc, k| acc.max(d.data[k].abs()).max(c.data[k].abs()))
    }
}

// ---------------------------------------------------------------------------
// field files

/// Writes components as a flat little-endian `f64` stream: header `n, s,
/// arity`, then node-major values in row-major node order.
pub fn write_binary(w: &mut impl Write, comps: &[&Field]) -> Result<(), GridError> {
    let g = comps.first().map(|f| f.grid).ok_or_else(|| GridError::Format("no components".into()))?;
    let mut buf = Vec::with_capacity(8 * (3 + g.len() * comps.len()));
    for v in [g.n as f64, g.s, comps.len() as f64] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for k in 0..g.len() {
        for c in comps {
            buf.extend_from_slice(&c.data[k].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary(r: &mut impl Read) -> Result<Vec<Field>, GridError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || bytes.len() % 8 != 0 {
        return Err(GridError::Format("truncated header".into()));
    }
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (n, s, arity) = (vals[0], vals[1], vals[2]);
    if n.fract() != 0.0 || arity.fract() != 0.0 || arity < 1.0 {
        return Err(GridError::Format("non-integer header".into()));
    }
    let grid = Grid::new(s, n as usize)?;
    let a = arity as usize;
    let body = &vals[3..];
    if body.len() != grid.len() * a {
        return Err(GridError::Shape { expected: grid.len() * a, got: body.len() });
    }
    Ok((0..a)
        .map(|c| Field { grid, data: (0..grid.len()).map(|k| body[k * a + c]).collect() })
        .collect())
}

/// CSV with columns `i, j, x1, x2, v0, ...`.
pub fn write_csv(w: impl Write, comps: &[&Field]) -> Result<(), GridError> {
    let g = comps.first().map(|f| f.grid).ok_or_else(|| GridError::Format("no components".into()))?;
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["i".to_string(), "j".into(), "x1".into(), "x2".into()];
    header.extend((0..comps.len()).map(|c| format!("v{c}")));
    wr.write_record(&header).map_err(|e| GridError::Format(e.to_string()))?;
    for k in 0..g.len() {
        let (x, y) = g.point(k);
        let mut rec = vec![(k % g.n).to_string(), (k / g.n).to_string(), format!("{x:.17e}"), format!("{y:.17e}")];
        rec.extend(comps.iter().map(|c| format!("{:.17e}", c.data[k])));
        wr.write_record(&rec).map_err(|e| GridError::Format(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(0.5, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.5, 32).is_err());
        assert!(Grid::new(0.5, 31).is_err());
        assert!(Grid::new(0.8, 33).is_err());
        assert!(Grid::new(0.0, 33).is_err());
        let g = Grid::new(0.5, 33).unwrap();
        assert!((g.h() - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn laplace_of_quadratic() {
        let g = grid(33);
        let f = Field::from_fn(g, |x, _| x * x);
        let l = laplace(&f);
        assert!(g.window(1).all(|k| (l.data()[k] - 2.0).abs() < 1e-10));
        let l5 = laplace5(&f);
        assert!(l5.data().iter().all(|v| (v - 2.0).abs() < 1e-9));
    }

    #[test]
    fn stencil_identities() {
        let g = grid(33);
        let f = Field::from_fn(g, |x, y| (3.0 * x).sin() * (2.0 * y).cosh() + x * y * y);
        assert!(curl(&grad(&f)).max_abs_window(1) < 1e-10);
        assert!(div(&grad_perp(&f)).max_abs_window(1) < 1e-10);
        let dl = &div(&grad(&f)) - &laplace(&f);
        assert!(dl.max_abs_window(1) < 1e-10);
        let c = f.to_complex();
        let w = &(&d_zstar(&d_z(&c)) * 4.0) - &laplace(&c);
        assert!(w.max_abs_window(1) < 1e-10);
    }

    #[test]
    fn adjoint_matches_transpose() {
        let g = grid(33);
        let f = Field::from_fn(g, |x, y| (x * 7.0).sin() + y * y * x);
        let w = Field::from_fn(g, |x, y| (y * 5.0).cos() - x);
        for (d, da) in [(d1::<f64> as fn(&Field) -> Field, d1_adjoint as fn(&Field) -> Field), (d2, d2_adjoint)] {
            let lhs: f64 = d(&f).data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.data().iter().zip(da(&w).data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn dirichlet_zero() {
        let g = grid(33);
        let z = Field::zeros(g);
        let (u, rep) = poisson_dirichlet(&z, &z).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(rep.sweeps, 0);
    }

    #[test]
    fn neumann_recovers_manufactured() {
        let g = grid(65);
        let exact = |x: f64, y: f64| (2.0 * x).cos() * y + x * x * x;
        let rhs = Field::from_fn(g, |x, y| -4.0 * (2.0 * x).cos() * y + 6.0 * x);
        let gx = Field::from_fn(g, |x, y| -2.0 * (2.0 * x).sin() * y + 3.0 * x * x);
        let gy = Field::from_fn(g, |x, _| (2.0 * x).cos());
        let flux = NeumannData::normal_flux(&[gx, gy]);
        let sol = poisson_neumann(&rhs, &flux).unwrap();
        let mut e = Field::from_fn(g, exact);
        let m = e.mean();
        e.data_mut().iter_mut().for_each(|v| *v -= m);
        assert!((&sol.u - &e).max_abs() < 1e-3);
        assert!(!sol.compat_warning);
    }

    #[test]
    fn binary_round_trip() {
        let g = grid(33);
        let a = Field::from_fn(g, |x, y| x + 2.0 * y);
        let b = Field::from_fn(g, |x, y| x * y);
        let mut buf = Vec::new();
        write_binary(&mut buf, &[&a, &b]).unwrap();
        let back = read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
    }
}
