//! Helpers for fields of vectors, complex vectors and multivectors stored as
//! one [`Field`] per component.

use num_complex::Complex64;

use crate::diskgrid::{self, CField, Field, Grid, INTERIOR};
use crate::multivec::{MultiVector, grade_dim};

pub fn at(c: &[Field], k: usize) -> Vec<f64> {
    c.iter().map(|f| f.data()[k]).collect()
}

pub fn cat(c: &[CField], k: usize) -> Vec<Complex64> {
    c.iter().map(|f| f.data()[k]).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Component fields from per-node vectors of length `dim`.
pub fn from_nodes(grid: Grid, dim: usize, nodes: &[Vec<f64>]) -> Vec<Field> {
    (0..dim).map(|c| Field::from_vec(grid, nodes.iter().map(|v| v[c]).collect()).unwrap()).collect()
}

pub fn from_cnodes(grid: Grid, dim: usize, nodes: &[Vec<Complex64>]) -> Vec<CField> {
    (0..dim).map(|c| Field::from_vec(grid, nodes.iter().map(|v| v[c]).collect()).unwrap()).collect()
}

/// Evaluates `f` at every node and collects the results componentwise.
pub fn tabulate(grid: Grid, dim: usize, f: impl Fn(usize) -> Vec<f64>) -> Vec<Field> {
    let nodes: Vec<Vec<f64>> = (0..grid.len()).map(f).collect();
    from_nodes(grid, dim, &nodes)
}

pub fn ctabulate(grid: Grid, dim: usize, f: impl Fn(usize) -> Vec<Complex64>) -> Vec<CField> {
    let nodes: Vec<Vec<Complex64>> = (0..grid.len()).map(f).collect();
    from_cnodes(grid, dim, &nodes)
}

pub fn d1(c: &[Field]) -> Vec<Field> {
    c.iter().map(diskgrid::d1).collect()
}

pub fn d2(c: &[Field]) -> Vec<Field> {
    c.iter().map(diskgrid::d2).collect()
}

pub fn laplace(c: &[Field]) -> Vec<Field> {
    c.iter().map(diskgrid::laplace).collect()
}

pub fn cd_z(c: &[CField]) -> Vec<CField> {
    c.iter().map(diskgrid::d_z).collect()
}

pub fn cd_zstar(c: &[CField]) -> Vec<CField> {
    c.iter().map(diskgrid::d_zstar).collect()
}

pub fn complexify(c: &[Field]) -> Vec<CField> {
    c.iter().map(Field::to_complex).collect()
}

pub fn add(a: &[Field], b: &[Field]) -> Vec<Field> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[Field], b: &[Field]) -> Vec<Field> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Interior sup of the pointwise Euclidean norm.
pub fn max_window(c: &[Field]) -> f64 {
    let g = *c[0].grid();
    g.window(INTERIOR).fold(0.0, |acc, k| acc.max(norm(&at(c, k))))
}

pub fn cmax_window(c: &[CField]) -> f64 {
    let g = *c[0].grid();
    g.window(INTERIOR).fold(0.0, |acc, k| acc.max(cnorm(&cat(c, k))))
}

/// Interior discrete `L2` norm, summed in quadrature over components.
pub fn l2_window(c: &[Field]) -> f64 {
    c.iter().map(|f| f.l2_window(INTERIOR).powi(2)).sum::<f64>().sqrt()
}

pub fn cl2_window(c: &[CField]) -> f64 {
    c.iter().map(|f| f.l2_window(INTERIOR).powi(2)).sum::<f64>().sqrt()
}

/// Multivector at node `k` from grade-`grade` coefficient fields.
pub fn grade_at(m: usize, grade: usize, c: &[Field], k: usize) -> MultiVector {
    MultiVector::from_grade(m, grade, &at(c, k)).unwrap()
}

/// Grade-`grade` coefficient fields of a per-node multivector function.
pub fn tabulate_grade(grid: Grid, m: usize, grade: usize, f: impl Fn(usize) -> MultiVector) -> Vec<Field> {
    tabulate(grid, grade_dim(m, grade), |k| f(k).grade_coeffs(grade).to_vec())
}
