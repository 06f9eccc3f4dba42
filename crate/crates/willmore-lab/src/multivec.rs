//! Exterior algebra over R^m for 3 <= m <= 6.
//!
//! Coefficients are stored densely, grade by grade, with the blades of each
//! grade in lexicographic order of their index sets. The orientation is
//! `e_1 ^ ... ^ e_m = +1` and every sign is a permutation parity.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::OnceLock;

use thiserror::Error;

pub const MIN_DIM: usize = 3;
pub const MAX_DIM: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultivecError {
    #[error("ambient dimension {0} outside supported range 3..=6")]
    UnsupportedDimension(usize),
    #[error("ambient dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("grade error: cannot contract a grade-{p} vector out of a grade-{q} vector")]
    Grade { p: usize, q: usize },
    #[error("invalid blade index set {0:?} for m = {1}")]
    InvalidBlade(Vec<usize>, usize),
}

struct Basis {
    /// slot -> bitmask
    masks: Vec<u32>,
    /// bitmask -> slot
    slot_of: Vec<usize>,
    /// first slot of each grade, plus a final sentinel
    offsets: Vec<usize>,
}

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

fn lex_subsets(m: usize, k: usize) -> Vec<u32> {
    fn rec(start: usize, m: usize, k: usize, acc: u32, out: &mut Vec<u32>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for i in start..m {
            if m - i < k {
                break;
            }
            rec(i + 1, m, k - 1, acc | (1 << i), out);
        }
    }
    let mut out = Vec::with_capacity(binom(m, k));
    rec(0, m, k, 0, &mut out);
    out
}

impl Basis {
    fn build(m: usize) -> Basis {
        let mut masks = Vec::with_capacity(1 << m);
        let mut offsets = Vec::with_capacity(m + 2);
        for k in 0..=m {
            offsets.push(masks.len());
            masks.extend(lex_subsets(m, k));
        }
        offsets.push(masks.len());
        let mut slot_of = vec![0usize; 1 << m];
        for (slot, &mask) in masks.iter().enumerate() {
            slot_of[mask as usize] = slot;
        }
        Basis { masks, slot_of, offsets }
    }
}

fn basis(m: usize) -> &'static Basis {
    static TABLES: OnceLock<Vec<Basis>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| (MIN_DIM..=MAX_DIM).map(Basis::build).collect());
    &tables[m - MIN_DIM]
}

/// Sign of `e_A ^ e_B` relative to `e_{A u B}`; zero when the sets overlap.
pub fn wedge_sign(a: u32, b: u32) -> f64 {
    if a & b != 0 {
        return 0.0;
    }
    // count pairs (i in a, j in b) with i > j
    let mut swaps = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        bb &= bb - 1;
        let above = a & !((2u32 << j) - 1);
        swaps += above.count_ones();
    }
    if swaps % 2 == 0 { 1.0 } else { -1.0 }
}

/// Basis blade: strictly increasing subset of `{1..m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Blade {
    m: usize,
    mask: u32,
}

impl Blade {
    /// Blade from 1-based indices, which must be strictly increasing.
    pub fn new(m: usize, indices: &[usize]) -> Result<Blade, MultivecError> {
        check_dim(m)?;
        let mut mask = 0u32;
        let mut prev = 0usize;
        for &i in indices {
            if i <= prev || i > m {
                return Err(MultivecError::InvalidBlade(indices.to_vec(), m));
            }
            mask |= 1 << (i - 1);
            prev = i;
        }
        Ok(Blade { m, mask })
    }

    pub fn from_mask(m: usize, mask: u32) -> Blade {
        debug_assert!(mask < (1 << m));
        Blade { m, mask }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn grade(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// 1-based indices in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.m).filter(|i| self.mask & (1 << i) != 0).map(|i| i + 1).collect()
    }

    /// Blades of grade `k` in lexicographic order.
    pub fn of_grade(m: usize, k: usize) -> Vec<Blade> {
        let b = basis(m);
        b.masks[b.offsets[k]..b.offsets[k + 1]].iter().map(|&mask| Blade { m, mask }).collect()
    }

    pub fn all(m: usize) -> Vec<Blade> {
        basis(m).masks.iter().map(|&mask| Blade { m, mask }).collect()
    }
}

fn check_dim(m: usize) -> Result<(), MultivecError> {
    if (MIN_DIM..=MAX_DIM).contains(&m) {
        Ok(())
    } else {
        Err(MultivecError::UnsupportedDimension(m))
    }
}

/// Element of the exterior algebra of R^m.
#[derive(Clone, PartialEq)]
pub struct MultiVector {
    m: usize,
    coeffs: Vec<f64>,
}

impl fmt::Debug for MultiVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = basis(self.m);
        let mut first = true;
        write!(f, "MultiVector(m={}; ", self.m)?;
        for (slot, &c) in self.coeffs.iter().enumerate() {
            if c != 0.0 {
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                write!(f, "{c}*e{:?}", Blade::from_mask(self.m, b.masks[slot]).indices())?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, ")")
    }
}

impl MultiVector {
    pub fn zero(m: usize) -> Result<MultiVector, MultivecError> {
        check_dim(m)?;
        Ok(MultiVector { m, coeffs: vec![0.0; 1 << m] })
    }

    fn zero_unchecked(m: usize) -> MultiVector {
        MultiVector { m, coeffs: vec![0.0; 1 << m] }
    }

    pub fn scalar(m: usize, c: f64) -> Result<MultiVector, MultivecError> {
        let mut out = MultiVector::zero(m)?;
        out.coeffs[0] = c;
        Ok(out)
    }

    /// 1-vector with the given components; the ambient dimension is `v.len()`.
    pub fn vector(v: &[f64]) -> Result<MultiVector, MultivecError> {
        let m = v.len();
        let mut out = MultiVector::zero(m)?;
        let b = basis(m);
        for (i, &c) in v.iter().enumerate() {
            out.coeffs[b.slot_of[1 << i]] = c;
        }
        Ok(out)
    }

    /// Unit blade `e_{i_1} ^ ... ^ e_{i_k}` from 1-based increasing indices.
    pub fn blade(m: usize, indices: &[usize]) -> Result<MultiVector, MultivecError> {
        let bl = Blade::new(m, indices)?;
        let mut out = MultiVector::zero(m)?;
        out.set(bl, 1.0);
        Ok(out)
    }

    /// Homogeneous grade-`k` element from coefficients in lexicographic blade order.
    pub fn from_grade(m: usize, k: usize, c: &[f64]) -> Result<MultiVector, MultivecError> {
        let mut out = MultiVector::zero(m)?;
        let b = basis(m);
        assert_eq!(c.len(), binom(m, k), "grade-{k} slot count");
        out.coeffs[b.offsets[k]..b.offsets[k + 1]].copy_from_slice(c);
        Ok(out)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coeff(&self, blade: Blade) -> f64 {
        self.coeffs[basis(self.m).slot_of[blade.mask as usize]]
    }

    pub fn set(&mut self, blade: Blade, c: f64) {
        let slot = basis(self.m).slot_of[blade.mask as usize];
        self.coeffs[slot] = c;
    }

    pub fn coeff_mask(&self, mask: u32) -> f64 {
        self.coeffs[basis(self.m).slot_of[mask as usize]]
    }

    fn add_mask(&mut self, mask: u32, c: f64) {
        let slot = basis(self.m).slot_of[mask as usize];
        self.coeffs[slot] += c;
    }

    /// Coefficients of grade `k` in lexicographic blade order.
    pub fn grade_coeffs(&self, k: usize) -> &[f64] {
        let b = basis(self.m);
        &self.coeffs[b.offsets[k]..b.offsets[k + 1]]
    }

    pub fn grade_part(&self, k: usize) -> MultiVector {
        let b = basis(self.m);
        let mut out = MultiVector::zero_unchecked(self.m);
        out.coeffs[b.offsets[k]..b.offsets[k + 1]].copy_from_slice(self.grade_coeffs(k));
        out
    }

    /// Grades carrying a nonzero coefficient.
    pub fn grades(&self) -> Vec<usize> {
        (0..=self.m).filter(|&k| self.grade_coeffs(k).iter().any(|&c| c != 0.0)).collect()
    }

    /// Components of the grade-1 part.
    pub fn to_vector(&self) -> Vec<f64> {
        self.grade_coeffs(1).to_vec()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn check_same(&self, other: &MultiVector) -> Result<(), MultivecError> {
        if self.m != other.m {
            Err(MultivecError::DimensionMismatch(self.m, other.m))
        } else {
            Ok(())
        }
    }

    fn terms(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        let b = basis(self.m);
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(move |(s, &c)| (b.masks[s], c))
    }

    /// Gram inner product; basis blades are orthonormal.
    pub fn inner(&self, other: &MultiVector) -> Result<f64, MultivecError> {
        self.check_same(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    pub fn wedge(&self, other: &MultiVector) -> Result<MultiVector, MultivecError> {
        self.check_same(other)?;
        let mut out = MultiVector::zero_unchecked(self.m);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                let s = wedge_sign(a, b);
                if s != 0.0 {
                    out.add_mask(a | b, s * ca * cb);
                }
            }
        }
        Ok(out)
    }

    /// Hodge star: `a ^ *b = <a, b> e_1 ^ ... ^ e_m`.
    pub fn hodge_star(&self) -> MultiVector {
        let full = (1u32 << self.m) - 1;
        let mut out = MultiVector::zero_unchecked(self.m);
        for (a, c) in self.terms() {
            let comp = full & !a;
            out.add_mask(comp, wedge_sign(a, comp) * c);
        }
        out
    }

    /// Interior multiplication, adjoint to the wedge:
    /// `<gamma ⌞ beta, alpha> = <gamma, beta ^ alpha>`.
    pub fn interior(&self, beta: &MultiVector) -> Result<MultiVector, MultivecError> {
        self.check_same(beta)?;
        let gs = self.grades();
        let bs = beta.grades();
        if let (Some(&q), Some(&p)) = (gs.iter().max(), bs.iter().min()) {
            if p > q {
                return Err(MultivecError::Grade { p, q });
            }
        }
        let mut out = MultiVector::zero_unchecked(self.m);
        for (c, cc) in self.terms() {
            for (b, cb) in beta.terms() {
                if b & c == b {
                    let rest = c & !b;
                    out.add_mask(rest, wedge_sign(b, rest) * cc * cb);
                }
            }
        }
        Ok(out)
    }

    /// First-order contraction `self • beta`, defined by `α•b = α⌞b` on
    /// 1-vectors and `α•(β^γ) = (α•β)^γ + (-1)^{pq} (α•γ)^β`.
    /// Scalar parts of `beta` contribute nothing.
    pub fn bullet(&self, beta: &MultiVector) -> Result<MultiVector, MultivecError> {
        self.check_same(beta)?;
        let mut out = MultiVector::zero_unchecked(self.m);
        for (b, cb) in beta.terms() {
            if b == 0 {
                continue;
            }
            let piece = self.bullet_blade(b);
            for (s, v) in out.coeffs.iter_mut().zip(&piece.coeffs) {
                *s += cb * v;
            }
        }
        Ok(out)
    }

    fn bullet_blade(&self, b: u32) -> MultiVector {
        let first = b & b.wrapping_neg();
        let e_first = self.unit(first);
        if b == first {
            return self.interior_unchecked(&e_first);
        }
        let rest = b & !first;
        let q = rest.count_ones() as usize;
        let e_rest = self.unit(rest);
        let left = self.interior_unchecked(&e_first).wedge_unchecked(&e_rest);
        let right = self.bullet_blade(rest).wedge_unchecked(&e_first);
        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        left + right * sign
    }

    fn unit(&self, mask: u32) -> MultiVector {
        let mut e = MultiVector::zero_unchecked(self.m);
        e.add_mask(mask, 1.0);
        e
    }

    fn interior_unchecked(&self, beta: &MultiVector) -> MultiVector {
        let mut out = MultiVector::zero_unchecked(self.m);
        for (c, cc) in self.terms() {
            for (b, cb) in beta.terms() {
                if b & c == b {
                    let rest = c & !b;
                    out.add_mask(rest, wedge_sign(b, rest) * cc * cb);
                }
            }
        }
        out
    }

    fn wedge_unchecked(&self, other: &MultiVector) -> MultiVector {
        let mut out = MultiVector::zero_unchecked(self.m);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                let s = wedge_sign(a, b);
                if s != 0.0 {
                    out.add_mask(a | b, s * ca * cb);
                }
            }
        }
        out
    }
}

/// Wedge of a list of 1-vectors given by components.
pub fn wedge_vectors(m: usize, vs: &[&[f64]]) -> Result<MultiVector, MultivecError> {
    let mut acc = MultiVector::scalar(m, 1.0)?;
    for v in vs {
        if v.len() != m {
            return Err(MultivecError::DimensionMismatch(m, v.len()));
        }
        acc = acc.wedge(&MultiVector::vector(v)?)?;
    }
    Ok(acc)
}

impl Add for MultiVector {
    type Output = MultiVector;
    fn add(mut self, rhs: MultiVector) -> MultiVector {
        self += rhs;
        self
    }
}

impl AddAssign for MultiVector {
    fn add_assign(&mut self, rhs: MultiVector) {
        assert_eq!(self.m, rhs.m, "ambient dimension mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl Sub for MultiVector {
    type Output = MultiVector;
    fn sub(mut self, rhs: MultiVector) -> MultiVector {
        self -= rhs;
        self
    }
}

impl SubAssign for MultiVector {
    fn sub_assign(&mut self, rhs: MultiVector) {
        assert_eq!(self.m, rhs.m, "ambient dimension mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

impl Mul<f64> for MultiVector {
    type Output = MultiVector;
    fn mul(mut self, rhs: f64) -> MultiVector {
        for a in &mut self.coeffs {
            *a *= rhs;
        }
        self
    }
}

impl Neg for MultiVector {
    type Output = MultiVector;
    fn neg(self) -> MultiVector {
        self * -1.0
    }
}

pub fn grade_dim(m: usize, k: usize) -> usize {
    binom(m, k)
}
