#![allow(dead_code)]

use std::collections::BTreeMap;

use willmore_lab::multivec::{Blade, MultiVector};

/// Multivector as a map from sorted 1-based index lists to coefficients.
pub type Oracle = BTreeMap<Vec<usize>, f64>;

pub fn perm_sign(v: &[usize]) -> f64 {
    let mut inv = 0;
    for a in 0..v.len() {
        for b in a + 1..v.len() {
            if v[a] > v[b] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 { 1.0 } else { -1.0 }
}

pub fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

pub fn to_oracle(x: &MultiVector) -> Oracle {
    Blade::all(x.m()).into_iter().map(|b| (b.indices(), x.coeff(b))).filter(|(_, c)| *c != 0.0).collect()
}

pub fn from_oracle(m: usize, o: &Oracle) -> MultiVector {
    let mut x = MultiVector::zero(m).unwrap();
    for (idx, &c) in o {
        let b = Blade::new(m, idx).unwrap();
        x.set(b, x.coeff(b) + c);
    }
    x
}

pub fn add_to(o: &mut Oracle, k: Vec<usize>, c: f64) {
    *o.entry(k).or_insert(0.0) += c;
}

/// Shuffle sum: `e_A ^ e_B = sign(A ++ B) e_{A u B}` for disjoint `A`, `B`.
pub fn o_wedge(x: &Oracle, y: &Oracle) -> Oracle {
    let mut out = Oracle::new();
    for (a, ca) in x {
        for (b, cb) in y {
            if a.iter().any(|i| b.contains(i)) {
                continue;
            }
            let cat: Vec<usize> = a.iter().chain(b).copied().collect();
            add_to(&mut out, sorted(cat.clone()), perm_sign(&cat) * ca * cb);
        }
    }
    out
}

pub fn complement(m: usize, a: &[usize]) -> Vec<usize> {
    (1..=m).filter(|i| !a.contains(i)).collect()
}

pub fn o_star(m: usize, x: &Oracle) -> Oracle {
    let mut out = Oracle::new();
    for (a, c) in x {
        let ac = complement(m, a);
        let cat: Vec<usize> = a.iter().chain(&ac).copied().collect();
        add_to(&mut out, ac, perm_sign(&cat) * c);
    }
    out
}

/// `e_C ⌞ e_B = sign(B ++ (C \ B)) e_{C \ B}` when `B ⊆ C`.
pub fn o_interior(g: &Oracle, b: &Oracle) -> Oracle {
    let mut out = Oracle::new();
    for (c, cc) in g {
        for (bb, cb) in b {
            if !bb.iter().all(|i| c.contains(i)) {
                continue;
            }
            let rest: Vec<usize> = c.iter().filter(|i| !bb.contains(i)).copied().collect();
            let cat: Vec<usize> = bb.iter().chain(&rest).copied().collect();
            add_to(&mut out, rest, perm_sign(&cat) * cc * cb);
        }
    }
    out
}

/// Bullet on a blade, splitting off the last index:
/// `α • (R ^ v) = (α • R) ^ v + (-1)^{|R|} (α ⌞ v) ^ R`.
pub fn o_bullet_blade(alpha: &Oracle, b: &[usize]) -> Oracle {
    let unit = |idx: &[usize]| Oracle::from([(idx.to_vec(), 1.0)]);
    if b.len() == 1 {
        return o_interior(alpha, &unit(b));
    }
    let (r, v) = b.split_at(b.len() - 1);
    let left = o_wedge(&o_bullet_blade(alpha, r), &unit(v));
    let right = o_wedge(&o_interior(alpha, &unit(v)), &unit(r));
    let sign = if r.len() % 2 == 0 { 1.0 } else { -1.0 };
    let mut out = left;
    for (k, c) in right {
        add_to(&mut out, k, sign * c);
    }
    out
}

pub fn o_bullet(alpha: &Oracle, beta: &Oracle) -> Oracle {
    let mut out = Oracle::new();
    for (b, cb) in beta {
        if b.is_empty() {
            continue;
        }
        for (k, c) in o_bullet_blade(alpha, b) {
            add_to(&mut out, k, cb * c);
        }
    }
    out
}

pub fn close(a: &MultiVector, b: &MultiVector) -> f64 {
    (a.clone() - b.clone()).max_abs()
}

pub fn unit(m: usize, b: Blade) -> MultiVector {
    let mut x = MultiVector::zero(m).unwrap();
    x.set(b, 1.0);
    x
}

