//! Divergence-form Willmore operator, its conservation identities, the
//! potentials `L`, `S`, `R` and the residuals of the associated systems.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::diskgrid::{self, CField, Field, GridError};
use crate::fields::{self, at, dot, grade_at, tabulate, tabulate_grade};
use crate::immersion::GeometryBundle;
use crate::multivec::{MultiVector, grade_dim};

/// Floor applied to normalization scales.
pub const SCALE_FLOOR: f64 = 1e-12;

pub(crate) fn scale_or_one(s: f64) -> f64 {
    if s < SCALE_FLOOR { 1.0 } else { s }
}

/// `Q = [Q_1, Q_2]`, one `m`-vector field per coordinate direction.
pub type Flux = [Vec<Field>; 2];

/// Derivatives `[d1 n, d2 n]` of the Gauss map as grade `m - 2` coefficients.
pub fn gauss_derivatives(b: &GeometryBundle) -> [Vec<Field>; 2] {
    [fields::d1(&b.frames.gauss), fields::d2(&b.frames.gauss)]
}

/// `Q_k = d_k H - 3 pi_n(d_k H) + *((grad_perp n)_k ^ H)`.
pub fn assemble_q(b: &GeometryBundle) -> Flux {
    let m = b.m;
    let dh = [fields::d1(&b.mean), fields::d2(&b.mean)];
    let dn = gauss_derivatives(b);
    let one = |dir: usize| {
        tabulate(b.grid, m, |k| {
            let dhk = at(&dh[dir], k);
            let pin = b.pi_n(k, &dhk);
            let perp = if dir == 0 { -grade_at(m, m - 2, &dn[1], k) } else { grade_at(m, m - 2, &dn[0], k) };
            let hv = MultiVector::vector(&b.mean_at(k)).unwrap();
            let star = perp.wedge(&hv).unwrap().hodge_star().to_vector();
            (0..m).map(|c| dhk[c] - 3.0 * pin[c] + star[c]).collect()
        })
    };
    [one(0), one(1)]
}

pub fn div_q(q: &Flux) -> Vec<Field> {
    q[0].iter().zip(&q[1]).map(|(a, c)| diskgrid::div(&[a.clone(), c.clone()])).collect()
}

/// Willmore operator `-1/2 e^{-2 lambda} div Q`, normalized so that it equals
/// the left side of the conformal Willmore equation at `f = 0`.
pub fn willmore_residual(b: &GeometryBundle) -> Vec<Field> {
    let dq = div_q(&assemble_q(b));
    let w = b.lambda().map(|l| -0.5 * (-2.0 * l).exp());
    dq.iter().map(|f| diskgrid::scale_by(&w, f)).collect()
}

/// Normalized interior sup of `grad Phi . Q` and `grad Phi ^ (Q + 2 grad H)`.
pub fn tangency_identities(b: &GeometryBundle, q: &Flux) -> (f64, f64) {
    let m = b.m;
    let dh = [fields::d1(&b.mean), fields::d2(&b.mean)];
    let dphi = &b.frames.dphi;
    let scale = scale_or_one(b.curvature_scale(2.0, 2));
    let mut rd = 0.0f64;
    let mut rw = 0.0f64;
    for k in b.grid.window(diskgrid::INTERIOR) {
        let mut d = 0.0;
        let mut w = MultiVector::zero(m).unwrap();
        for dir in 0..2 {
            let p = at(&dphi[dir], k);
            let qk = at(&q[dir], k);
            d += dot(&p, &qk);
            let t: Vec<f64> = qk.iter().zip(at(&dh[dir], k)).map(|(a, h)| a + 2.0 * h).collect();
            w += MultiVector::vector(&p).unwrap().wedge(&MultiVector::vector(&t).unwrap()).unwrap();
        }
        rd = rd.max(d.abs());
        rw = rw.max(w.norm());
    }
    (rd / scale, rw / scale)
}

/// Componentwise potential of a flux.
#[derive(Debug, Clone)]
pub struct Potential {
    pub l: Vec<Field>,
    /// `|| grad_perp L - Q ||_{L2}` over the interior window.
    pub defect: f64,
    /// Largest Neumann compatibility defect among the components.
    pub compat_defect: f64,
}

/// `grad_perp L = Q` in the least-squares sense, one Neumann solve per component.
pub fn recover_l(q: &Flux) -> Result<Potential, GridError> {
    let mut l = Vec::with_capacity(q[0].len());
    let mut d2 = 0.0;
    let mut compat = 0.0f64;
    for (a, c) in q[0].iter().zip(&q[1]) {
        let p = diskgrid::curl_potential(&[a.clone(), c.clone()])?;
        d2 += p.defect * p.defect;
        compat = compat.max(p.compat_defect.abs());
        l.push(p.l);
    }
    Ok(Potential { l, defect: d2.sqrt(), compat_defect: compat })
}

/// `d_z L = (G_2 + i G_1) / 2` for a flux `G` standing for `grad_perp L`.
pub fn dz_of_flux(g: &Flux) -> Vec<CField> {
    g[0].iter().zip(&g[1]).map(|(g1, g2)| g2.zip_map(g1, |a, c| Complex64::new(0.5 * a, 0.5 * c))).collect()
}

/// `H_0^* . H` at every node.
pub fn h0star_dot_h(b: &GeometryBundle) -> CField {
    Field::from_vec(
        b.grid,
        (0..b.grid.len())
            .map(|k| {
                let h = b.mean_at(k);
                b.h0_at(k).iter().zip(&h).map(|(z, x)| z.conj() * x).sum()
            })
            .collect(),
    )
    .unwrap()
}

/// Normal projection of a complex vector field.
pub fn pi_n_complex(b: &GeometryBundle, f: &[CField]) -> Vec<CField> {
    let re = b.pi_n_field(&f.iter().map(CField::re).collect::<Vec<_>>());
    let im = b.pi_n_field(&f.iter().map(CField::im).collect::<Vec<_>>());
    re.iter().zip(&im).map(|(a, c)| a.zip_map(c, Complex64::new)).collect()
}

/// The field `L_0` through its defining flux and through the closed form of `d_z L_0`.
#[derive(Debug, Clone)]
pub struct L0Data {
    /// Defining flux `grad H - 3 pi_n(grad H) + *(grad_perp n ^ H)`.
    pub flux: Flux,
    pub dz_defining: Vec<CField>,
    /// `-2i e^lambda (H_0^* . H) e_{z*} - 2i pi_n(d_z H)`
    pub dz_closed: Vec<CField>,
    pub l0: Potential,
    /// Interior sup of the difference of the two `d_z L_0`, normalized by `max e^lambda |B|^2`.
    pub consistency: f64,
}

pub fn assemble_l0(b: &GeometryBundle) -> Result<L0Data, GridError> {
    let flux = assemble_q(b);
    let dz_defining = dz_of_flux(&flux);
    let dz_closed = dz_l0_closed(b);
    let diff: Vec<CField> = dz_defining.iter().zip(&dz_closed).map(|(a, c)| a - c).collect();
    let consistency = fields::cmax_window(&diff) / scale_or_one(b.curvature_scale(1.0, 2));
    let l0 = recover_l(&flux)?;
    Ok(L0Data { flux, dz_defining, dz_closed, l0, consistency })
}

pub fn dz_l0_closed(b: &GeometryBundle) -> Vec<CField> {
    let i = Complex64::i();
    let hh = h0star_dot_h(b);
    let dzh = pi_n_complex(b, &fields::cd_z(&fields::complexify(&b.mean)));
    let lam = b.lambda().data();
    (0..b.m)
        .map(|c| {
            let ezs = b.frames.ezstar[c].data();
            let v = (0..b.grid.len())
                .map(|k| -2.0 * i * lam[k].exp() * hh.data()[k] * ezs[k] - 2.0 * i * dzh[c].data()[k])
                .collect();
            Field::from_vec(b.grid, v).unwrap()
        })
        .collect()
}

/// Interior `L2` norm of `laplace L - 4 d_{z*} d_z L_0 - 2i H_0 f`.
/// `Delta L = curl G` for a flux `G = grad_perp L`.
pub fn lap_of_flux(g: &Flux) -> Vec<Field> {
    g[0].iter().zip(&g[1]).map(|(g1, g2)| diskgrid::curl(&[g1.clone(), g2.clone()])).collect()
}

/// `lap` is `Delta L`, either `fields::laplace(L)` or `lap_of_flux`.
pub fn cwbis_residual(b: &GeometryBundle, lap: &[Field], l0: &L0Data, f: &CField) -> f64 {
    let i = Complex64::i();
    let ddl0 = fields::cd_zstar(&l0.dz_closed);
    let res: Vec<CField> = (0..b.m)
        .map(|c| {
            let v = (0..b.grid.len())
                .map(|k| {
                    Complex64::new(lap[c].data()[k], 0.0)
                        - 4.0 * ddl0[c].data()[k]
                        - 2.0 * i * b.weingarten[c].data()[k] * f.data()[k]
                })
                .collect();
            Field::from_vec(b.grid, v).unwrap()
        })
        .collect();
    fields::cl2_window(&res)
}

/// `S`, `R` with `grad S ~ grad Phi . L` and `grad R ~ grad Phi ^ L + 2 grad_perp Phi ^ H`.
#[derive(Debug, Clone)]
pub struct SrData {
    pub s: Field,
    /// Grade-2 coefficient fields of `R`.
    pub r: Vec<Field>,
    /// Defining gradient `grad Phi . L`.
    pub s_target: [Field; 2],
    /// Defining gradient `grad Phi ^ L + 2 grad_perp Phi ^ H`, grade-2 coefficients.
    pub r_target: [Vec<Field>; 2],
    pub s_defect: f64,
    pub r_defect: f64,
}

pub fn build_s_r(b: &GeometryBundle, l: &[Field]) -> Result<SrData, GridError> {
    let m = b.m;
    let dphi = &b.frames.dphi;
    let s_target: [Field; 2] = std::array::from_fn(|j| {
        Field::from_vec(b.grid, (0..b.grid.len()).map(|k| dot(&at(&dphi[j], k), &at(l, k))).collect()).unwrap()
    });
    let sp = diskgrid::grad_potential(&s_target)?;
    let r_target: [Vec<Field>; 2] = std::array::from_fn(|j| {
        tabulate_grade(b.grid, m, 2, |k| {
            let lk = MultiVector::vector(&at(l, k)).unwrap();
            let hk = MultiVector::vector(&b.mean_at(k)).unwrap();
            let pj = MultiVector::vector(&at(&dphi[j], k)).unwrap();
            let perp = if j == 0 {
                -MultiVector::vector(&at(&dphi[1], k)).unwrap()
            } else {
                MultiVector::vector(&at(&dphi[0], k)).unwrap()
            };
            pj.wedge(&lk).unwrap() + perp.wedge(&hk).unwrap() * 2.0
        })
    });
    let mut r = Vec::with_capacity(grade_dim(m, 2));
    let mut rd2 = 0.0;
    for c in 0..grade_dim(m, 2) {
        let p = diskgrid::grad_potential(&[r_target[0][c].clone(), r_target[1][c].clone()])?;
        rd2 += p.defect * p.defect;
        r.push(p.l);
    }
    Ok(SrData { s: sp.l, r, s_target, r_target, s_defect: sp.defect, r_defect: rd2.sqrt() })
}

/// Residual fields of the `S`, `R` system.
#[derive(Debug, Clone)]
pub struct SrResidual {
    /// `laplace S - (grad *n) . grad_perp R`
    pub res_s: Field,
    /// `laplace R - sign *(grad n . grad_perp R) + (grad *n) grad_perp S` for `sign = +1, -1`.
    pub res_r_plus: Vec<Field>,
    pub res_r_minus: Vec<Field>,
    /// Sign `(-1)^m`.
    pub sign: f64,
}

impl SrResidual {
    pub fn s_norm(&self) -> f64 {
        self.res_s.max_abs_window(diskgrid::INTERIOR)
    }

    /// Interior sup for the sign `(-1)^m`.
    pub fn r_norm(&self) -> f64 {
        if self.sign > 0.0 { fields::max_window(&self.res_r_plus) } else { fields::max_window(&self.res_r_minus) }
    }

    /// Interior sup for the opposite sign.
    pub fn r_norm_opposite(&self) -> f64 {
        if self.sign > 0.0 { fields::max_window(&self.res_r_minus) } else { fields::max_window(&self.res_r_plus) }
    }
}

/// Pieces `(grad *n) . grad_perp R`, `*(grad n . grad_perp R)` and `(grad *n) grad_perp S`.
fn sr_terms(b: &GeometryBundle, s: &Field, r: &[Field]) -> (Field, Vec<Field>, Vec<Field>) {
    let m = b.m;
    let dn = gauss_derivatives(b);
    let dr = [fields::d1(r), fields::d2(r)];
    let ds = [diskgrid::d1(s), diskgrid::d2(s)];
    let g2 = grade_dim(m, 2);
    let mut ts = vec![0.0; b.grid.len()];
    let mut bul = vec![vec![0.0; g2]; b.grid.len()];
    let mut star_s = vec![vec![0.0; g2]; b.grid.len()];
    for k in 0..b.grid.len() {
        let dnk = [grade_at(m, m - 2, &dn[0], k), grade_at(m, m - 2, &dn[1], k)];
        let perp_r = [-grade_at(m, 2, &dr[1], k), grade_at(m, 2, &dr[0], k)];
        let perp_s = [-ds[1].data()[k], ds[0].data()[k]];
        let mut acc_b = MultiVector::zero(m).unwrap();
        let mut acc_s = MultiVector::zero(m).unwrap();
        for j in 0..2 {
            let dstar = dnk[j].hodge_star();
            ts[k] += dstar.inner(&perp_r[j]).unwrap();
            acc_b += dnk[j].bullet(&perp_r[j]).unwrap();
            acc_s += dstar * perp_s[j];
        }
        bul[k] = acc_b.hodge_star().grade_coeffs(2).to_vec();
        star_s[k] = acc_s.grade_coeffs(2).to_vec();
    }
    (
        Field::from_vec(b.grid, ts).unwrap(),
        fields::from_nodes(b.grid, g2, &bul),
        fields::from_nodes(b.grid, g2, &star_s),
    )
}

pub fn sr_system_residual(b: &GeometryBundle, s: &Field, r: &[Field]) -> SrResidual {
    let (ts, bul, star_s) = sr_terms(b, s, r);
    let lap_s = diskgrid::laplace(s);
    let lap_r = fields::laplace(r);
    let res_s = &lap_s - &ts;
    let with_sign = |sg: f64| -> Vec<Field> {
        lap_r.iter().zip(&bul).zip(&star_s).map(|((l, bb), ss)| &(l - &(bb * sg)) + ss).collect()
    };
    SrResidual {
        res_s,
        res_r_plus: with_sign(1.0),
        res_r_minus: with_sign(-1.0),
        sign: if b.m % 2 == 0 { 1.0 } else { -1.0 },
    }
}

/// `grad R . grad_perp Phi = sum_j d_j R . (grad_perp Phi)_j` and
/// `grad S grad_perp Phi = sum_j d_j S (grad_perp Phi)_j` from given gradients.
fn phi_terms(b: &GeometryBundle, ds: &[Field; 2], dr: &[Vec<Field>; 2], naive: bool) -> (Vec<Field>, Vec<Field>) {
    let m = b.m;
    let dphi = &b.frames.dphi;
    let rb = tabulate(b.grid, m, |k| {
        let perp = [at(&dphi[1], k).iter().map(|x| -x).collect::<Vec<_>>(), at(&dphi[0], k)];
        let mut acc = vec![0.0; m];
        for j in 0..2 {
            let rj = grade_at(m, 2, &dr[j], k);
            let term = if naive {
                // blade coefficients paired slot by slot with the 1-vector
                let c = rj.grade_coeffs(2);
                (0..m).map(|i| c.get(i).copied().unwrap_or(0.0) * perp[j][i]).collect()
            } else {
                rj.bullet(&MultiVector::vector(&perp[j]).unwrap()).unwrap().to_vector()
            };
            for (a, t) in acc.iter_mut().zip(term) {
                *a += t;
            }
        }
        acc
    });
    let sb = tabulate(b.grid, m, |k| {
        let p1 = at(&dphi[0], k);
        let p2 = at(&dphi[1], k);
        let (s1, s2) = (ds[0].data()[k], ds[1].data()[k]);
        (0..m).map(|c| -s1 * p2[c] + s2 * p1[c]).collect()
    });
    (rb, sb)
}

/// Residuals of the identity relating `laplace Phi` to `S` and `R`, each an
/// interior sup normalized by `max e^{2 lambda} |B|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhiIdentity {
    /// `2 laplace Phi - grad R . grad_perp Phi + grad S grad_perp Phi` with the defining gradients.
    pub residual: f64,
    /// Same with gradients of the solved potentials.
    pub potentials: f64,
    /// `laplace Phi + grad R . grad_perp Phi + grad S grad_perp Phi` with the defining gradients.
    pub literal: f64,
    /// `residual` with `.` replaced by a slotwise pairing; a negative control.
    pub naive: f64,
}

pub fn phi_identity_residual(b: &GeometryBundle, sr: &SrData) -> PhiIdentity {
    let lap = fields::laplace(&b.phi);
    let scale = scale_or_one(b.curvature_scale(2.0, 1));
    let combine = |rb: &[Field], sb: &[Field], c_lap: f64, c_r: f64| -> f64 {
        let res: Vec<Field> = (0..b.m).map(|c| &(&(&lap[c] * c_lap) + &(&rb[c] * c_r)) + &sb[c]).collect();
        fields::max_window(&res) / scale
    };
    let (rb, sb) = phi_terms(b, &sr.s_target, &sr.r_target, false);
    let (rn, sn) = phi_terms(b, &sr.s_target, &sr.r_target, true);
    let ds = [diskgrid::d1(&sr.s), diskgrid::d2(&sr.s)];
    let dr = [fields::d1(&sr.r), fields::d2(&sr.r)];
    let (rp, sp) = phi_terms(b, &ds, &dr, false);
    PhiIdentity {
        residual: combine(&rb, &sb, 2.0, -1.0),
        potentials: combine(&rp, &sp, 2.0, -1.0),
        literal: combine(&rb, &sb, 1.0, 1.0),
        naive: combine(&rn, &sn, 2.0, -1.0),
    }
}

/// `laplace Phi - 2 e^{2 lambda} H`, interior sup normalized by `max e^{2 lambda} |B|`.
pub fn laplace_phi_residual(b: &GeometryBundle) -> f64 {
    let lap = fields::laplace(&b.phi);
    let res = tabulate(b.grid, b.m, |k| {
        let w = 2.0 * b.area_density.data()[k];
        let h = b.mean_at(k);
        at(&lap, k).iter().zip(&h).map(|(l, x)| l - w * x).collect()
    });
    fields::max_window(&res) / scale_or_one(b.curvature_scale(2.0, 1))
}

/// Everything computed from one bundle, with the named residual statistics.
#[derive(Debug, Clone)]
pub struct ConservationBundle {
    pub q: Flux,
    pub div_q: Vec<Field>,
    pub l: Potential,
    pub l0: L0Data,
    pub sr: SrData,
    pub sr_residual: SrResidual,
    pub phi_identity: PhiIdentity,
    pub residual_report: BTreeMap<String, f64>,
}

/// Report keys owned by this module, in contract order.
pub const REPORT_KEYS: [&str; 11] = [
    "dot_identity",
    "wedge_identity",
    "divQ_inf",
    "L_defect",
    "S_defect",
    "R_defect",
    "srS_resid",
    "srR_resid",
    "phi_identity",
    "L0_consistency",
    "cwbis_resid",
];

impl ConservationBundle {
    /// Runs the full pipeline. `cwbis_resid` needs the conformal potential and
    /// `f`, which are supplied by the caller.
    pub fn compute(b: &GeometryBundle) -> Result<ConservationBundle, GridError> {
        let q = assemble_q(b);
        let dq = div_q(&q);
        let (rd, rw) = tangency_identities(b, &q);
        let l = recover_l(&q)?;
        let l0 = assemble_l0(b)?;
        let sr = build_s_r(b, &l.l)?;
        let sr_residual = sr_system_residual(b, &sr.s, &sr.r);
        let phi_identity = phi_identity_residual(b, &sr);
        let w = b.lambda().map(|x| 0.5 * (-2.0 * x).exp());
        let wr: Vec<Field> = dq.iter().map(|f| diskgrid::scale_by(&w, f)).collect();
        let mut rep = BTreeMap::new();
        rep.insert("dot_identity".into(), rd);
        rep.insert("wedge_identity".into(), rw);
        rep.insert("divQ_inf".into(), fields::max_window(&wr));
        rep.insert("L_defect".into(), l.defect);
        rep.insert("S_defect".into(), sr.s_defect);
        rep.insert("R_defect".into(), sr.r_defect);
        rep.insert("srS_resid".into(), sr_residual.s_norm());
        rep.insert("srR_resid".into(), sr_residual.r_norm());
        rep.insert("phi_identity".into(), phi_identity.residual);
        rep.insert("L0_consistency".into(), l0.consistency);
        Ok(ConservationBundle { q, div_q: dq, l, l0, sr, sr_residual, phi_identity, residual_report: rep })
    }
}
