use proptest::prelude::*;
use willmore_lab::diskgrid::{Field, Grid};
use willmore_lab::lorentz::*;

fn grid() -> Grid {
    Grid::new(0.5, 33).unwrap()
}

fn field_strategy() -> impl Strategy<Value = Field> {
    prop::collection::vec(-3.0f64..3.0, 33 * 33).prop_map(|v| Field::from_vec(grid(), v).unwrap())
}

fn smooth_strategy() -> impl Strategy<Value = Field> {
    prop::collection::vec(-1.0f64..1.0, 6).prop_map(|c| {
        Field::from_fn(grid(), move |x, y| {
            c[0] + c[1] * (3.0 * x).sin() + c[2] * (2.0 * y).cos() + c[3] * x * y + c[4] * (x * x - y) + c[5] * (5.0 * x * y).exp()
        })
    })
}

fn exponents() -> impl Strategy<Value = (f64, f64)> {
    (1.1f64..4.0, prop_oneof![Just(f64::INFINITY), 1.0f64..6.0])
}

#[test]
fn constant_on_fragment() {
    let w = vec![std::f64::consts::PI / 400.0; 100];
    let p = rearrange_weighted(&vec![1.0; 100], &w).unwrap();
    let v = lorentz_norm(&p, 2.0, f64::INFINITY).unwrap();
    assert!((v - (std::f64::consts::PI / 4.0).sqrt()).abs() < 1e-14);
    let v22 = lorentz_norm(&p, 2.0, 2.0).unwrap();
    assert!((v22 - (std::f64::consts::PI / 4.0).sqrt()).abs() < 1e-12);
}

#[test]
fn weights_cover_the_square() {
    let g = Grid::new(0.4, 65).unwrap();
    let total: f64 = node_weights(&g).iter().sum();
    assert!((total - g.area()).abs() < 1e-12);
    let p = rearrange(&Field::from_fn(g, |x, _| x)).unwrap();
    assert!((p.total_measure() - 0.64).abs() < 1e-12);
}

#[test]
fn bad_inputs_rejected() {
    let f = Field::from_fn(grid(), |x, _| x);
    let p = rearrange(&f).unwrap();
    assert!(lorentz_norm(&p, 1.0, 2.0).is_err());
    assert!(lorentz_norm(&p, 2.0, 0.5).is_err());
    assert!(lorentz_norm(&p, f64::INFINITY, 2.0).is_err());
    let mut bad = f.clone();
    bad.data_mut()[5] = f64::NAN;
    assert!(matches!(rearrange(&bad), Err(LorentzError::NonFinite(5))));
    assert!(rearrange_weighted(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn wente_batch_is_deterministic() {
    let seeds = [3, 9, 27];
    let a = wente_batch(grid(), &seeds).unwrap();
    let b = wente_batch(grid(), &seeds).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|s| s.finite() && !s.degenerate && s.ratio_l2 > 0.0));
    let (x, _) = random_pair(grid(), 3);
    let (y, _) = random_pair(grid(), 4);
    assert_ne!(x, y);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn equimeasurable(f in field_strategy(), s in 0.0f64..3.0) {
        let p = rearrange(&f).unwrap();
        let w = node_weights(&grid());
        let direct: f64 = f.data().iter().zip(&w).filter(|(v, _)| v.abs() >= s).map(|(_, w)| w).sum();
        prop_assert!((p.level_measure(s) - direct).abs() <= 1e-12 * (1.0 + direct));
        prop_assert!((p.total_measure() - 1.0).abs() < 1e-12);
        prop_assert!(p.fstar.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(p.fstar.iter().zip(&p.fstarstar).all(|(a, b)| *b >= *a - 1e-12));
    }

    #[test]
    fn interior_permutation_invariance(f in field_strategy(), shift in 1usize..30) {
        let g = grid();
        let idx: Vec<usize> = g.window(1).collect();
        let mut perm = f.clone();
        for (k, &i) in idx.iter().enumerate() {
            perm.data_mut()[i] = f.data()[idx[(k + shift) % idx.len()]];
        }
        let (a, b) = (rearrange(&f).unwrap(), rearrange(&perm).unwrap());
        prop_assert_eq!(&a.fstar, &b.fstar);
        for q in [1.0, 2.0, f64::INFINITY] {
            let (x, y) = (lorentz_norm(&a, 2.0, q).unwrap(), lorentz_norm(&b, 2.0, q).unwrap());
            prop_assert!((x - y).abs() <= 1e-12 * x);
        }
    }

    #[test]
    fn homogeneous(f in field_strategy(), c in -5.0f64..5.0, (p, q) in exponents()) {
        let scaled = f.map(|v| c * v);
        let a = lorentz_norm(&rearrange(&f).unwrap(), p, q).unwrap();
        let b = lorentz_norm(&rearrange(&scaled).unwrap(), p, q).unwrap();
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn monotone(f in field_strategy(), g in field_strategy(), (p, q) in exponents()) {
        let big = f.zip_map(&g, |a, b| a.abs().max(b.abs()));
        let a = lorentz_norm(&rearrange(&f).unwrap(), p, q).unwrap();
        let b = lorentz_norm(&rearrange(&big).unwrap(), p, q).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn nested(f in smooth_strategy(), p in 1.1f64..4.0, q1 in 1.0f64..4.0, dq in 0.0f64..4.0) {
        let prof = rearrange(&f).unwrap();
        let q2 = q1 + dq;
        let a = lorentz_norm(&prof, p, q1).unwrap();
        let b = lorentz_norm(&prof, p, q2).unwrap();
        let c = lorentz_norm(&prof, p, f64::INFINITY).unwrap();
        let k = |qa: f64, qb: f64| (qa / p).powf(1.0 / qa - 1.0 / qb);
        prop_assert!(b <= k(q1, q2) * a * (1.0 + 1e-9));
        prop_assert!(c <= (q1 / p).powf(1.0 / q1) * a * (1.0 + 1e-9));
    }

    #[test]
    fn l22_over_l2_between_one_and_two(f in smooth_strategy()) {
        let r = lorentz_norm(&rearrange(&f).unwrap(), 2.0, 2.0).unwrap() / l2_norm(&f);
        prop_assert!((1.0 - 1e-12..=2.0).contains(&r), "{}", r);
    }

    #[test]
    fn wente_ratios_scale_invariant(seed in 0u64..1000, ca in 0.1f64..10.0, cb in -10.0f64..-0.1, t in -2.0f64..2.0) {
        let (a, b) = random_pair(grid(), seed);
        let r0 = wente_solve(&a, &b).unwrap();
        let r1 = wente_solve(&a.map(|v| ca * v + t), &b.map(|v| cb * v)).unwrap();
        prop_assert!((r0.ratio_l2 - r1.ratio_l2).abs() <= 1e-8 * r0.ratio_l2);
        prop_assert!((r0.ratio_l21 - r1.ratio_l21).abs() <= 1e-8 * r0.ratio_l21);
    }
}
