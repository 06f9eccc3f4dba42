//! Complex-frame identities, Codazzi-Mainardi, the holomorphic coordinate `f`
//! and the conformal Willmore equation.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::conservation::{self, Flux, scale_or_one};
use crate::diskgrid::{self, CField, Field, GridError, INTERIOR};
use crate::fields::{self, at, cat, ctabulate, dot, tabulate};
use crate::immersion::GeometryBundle;

/// Interior sup of the (a4) and (a5) residuals, normalized by `max e^lambda |B|`.
pub fn frame_derivative_residuals(b: &GeometryBundle) -> (f64, f64) {
    let m = b.m;
    let lam = b.lambda().to_complex();
    let dzs_lam = diskgrid::d_zstar(&lam);
    let dzs_ez = fields::cd_zstar(&b.frames.ez);
    let dzs_ezs = fields::cd_zstar(&b.frames.ezstar);
    let scale = scale_or_one(b.curvature_scale(1.0, 1));
    let mut r4 = 0.0f64;
    for k in b.grid.window(INTERIOR) {
        let el = b.lambda().data()[k].exp();
        let dl = dzs_lam.data()[k];
        let ez = cat(&b.frames.ez, k);
        let ezs = cat(&b.frames.ezstar, k);
        let h = b.mean_at(k);
        let h0 = b.h0_at(k);
        let a = cat(&dzs_ez, k);
        let c = cat(&dzs_ezs, k);
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for i in 0..m {
            e1 += (a[i] - (-dl * ez[i] + 0.5 * el * h[i])).norm_sqr();
            e2 += (c[i] - (dl * ezs[i] + 0.5 * el * h0[i])).norm_sqr();
        }
        r4 = r4.max(e1.sqrt()).max(e2.sqrt());
    }
    let mut r5 = 0.0f64;
    for alpha in 0..m - 2 {
        let dn = fields::cd_zstar(&fields::complexify(&b.frames.normals[alpha]));
        for k in b.grid.window(INTERIOR) {
            let el = b.lambda().data()[k].exp();
            let v = cat(&dn, k);
            let re: Vec<f64> = v.iter().map(|z| z.re).collect();
            let im: Vec<f64> = v.iter().map(|z| z.im).collect();
            let (tr, ti) = (b.tangential(k, &re), b.tangential(k, &im));
            let ha = b.h[alpha][0].data()[k] * 0.5 + b.h[alpha][3].data()[k] * 0.5;
            let h0a = Complex64::new(
                0.5 * (b.h[alpha][0].data()[k] - b.h[alpha][3].data()[k]),
                b.h[alpha][1].data()[k],
            );
            let ez = cat(&b.frames.ez, k);
            let ezs = cat(&b.frames.ezstar, k);
            let mut e = 0.0;
            for i in 0..m {
                let expect = -el * (h0a * ez[i] + ha * ezs[i]);
                e += (Complex64::new(tr[i], ti[i]) - expect).norm_sqr();
            }
            r5 = r5.max(e.sqrt());
        }
    }
    (r4 / scale, r5 / scale)
}

/// Codazzi-Mainardi residual `e^{-2 lambda} d_{z*}(e^{2 lambda} H_0^* . H) - H . d_z H - H_0^* . d_{z*} H`,
/// interior sup normalized by `max e^lambda |B|^3`.
pub fn codazzi_residual(b: &GeometryBundle) -> f64 {
    let hh = conservation::h0star_dot_h(b);
    let w = b.area_density.to_complex();
    let lhs_inner = diskgrid::d_zstar(&w.zip_map(&hh, |a, c| a * c));
    let hc = fields::complexify(&b.mean);
    let dz_h = fields::cd_z(&hc);
    let dzs_h = fields::cd_zstar(&hc);
    let scale = scale_or_one(b.curvature_scale(1.0, 3));
    let mut r = 0.0f64;
    for k in b.grid.window(INTERIOR) {
        let lhs = lhs_inner.data()[k] / b.area_density.data()[k];
        let h = b.mean_at(k);
        let h0 = b.h0_at(k);
        let a = cat(&dz_h, k);
        let c = cat(&dzs_h, k);
        let rhs: Complex64 = (0..b.m).map(|i| h[i] * a[i] + h0[i].conj() * c[i]).sum();
        r = r.max((lhs - rhs).norm());
    }
    r / scale
}

/// Total degree of the tensor Legendre basis for the tangential correction.
pub const CORRECTION_DEGREE: usize = 6;

/// Relative eigenvalue cutoff of the normal equations. Directions below it are
/// treated as the continuum kernel `Re(f H_0) = 0`.
pub const GRAM_CUTOFF: f64 = 1e-5;

/// Result of the least-squares search for the tangential trace-free correction.
#[derive(Debug, Clone)]
pub struct ConformalPotential {
    /// Corrected flux `Q + K`.
    pub flux: Flux,
    /// Potential with `grad_perp L ~ Q + K`.
    pub l: conservation::Potential,
    /// Interior sup of `|div(Q + K)|` after the fit.
    pub div_defect: f64,
    /// Numerical rank of the fit.
    pub rank: usize,
}

/// `K = (a e1 + b e2, b e1 - a e2)` from the complex field `B = b + i a`.
fn k_flux(b: &GeometryBundle, bf: &[Complex64]) -> Flux {
    let e = &b.frames.e;
    [
        tabulate(b.grid, b.m, |k| {
            let (e1, e2) = (at(&e[0], k), at(&e[1], k));
            (0..b.m).map(|i| bf[k].im * e1[i] + bf[k].re * e2[i]).collect()
        }),
        tabulate(b.grid, b.m, |k| {
            let (e1, e2) = (at(&e[0], k), at(&e[1], k));
            (0..b.m).map(|i| bf[k].re * e1[i] - bf[k].im * e2[i]).collect()
        }),
    ]
}

fn legendre(x: f64, deg: usize) -> Vec<f64> {
    let mut p = vec![1.0, x];
    for k in 1..deg {
        let kf = k as f64;
        p.push(((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0));
    }
    p.truncate(deg + 1);
    p
}

/// Tangential trace-free `K` with `div(Q + K)` minimal in least squares over
/// `K(B)`, `e^lambda B` a complex polynomial of total degree
/// [`CORRECTION_DEGREE`]; minimal-norm coefficients resolve the kernel. The
/// conformal potential is the componentwise curl potential of `Q + K`.
pub fn conformal_potential(b: &GeometryBundle, q: &Flux) -> Result<ConformalPotential, GridError> {
    let g = b.grid;
    let deg = CORRECTION_DEGREE;
    let mut modes = Vec::new();
    for i in 0..=deg {
        for j in 0..=deg - i {
            modes.push((i, j));
        }
    }
    let rows: Vec<usize> = g.window(INTERIOR).collect();
    let lam = b.lambda().data();
    let scaled: Vec<(Vec<f64>, Vec<f64>)> = (0..g.len())
        .map(|k| {
            let (x, y) = g.point(k);
            (legendre(x / g.s(), deg), legendre(y / g.s(), deg))
        })
        .collect();
    let ncol = 2 * modes.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(ncol);
    for &(i, j) in &modes {
        for unit in [Complex64::new(1.0, 0.0), Complex64::i()] {
            let bf: Vec<Complex64> =
                (0..g.len()).map(|k| unit * (scaled[k].0[i] * scaled[k].1[j] * (-lam[k]).exp())).collect();
            let dk = conservation::div_q(&k_flux(b, &bf));
            cols.push(dk.iter().flat_map(|f| rows.iter().map(|&k| f.data()[k])).collect());
        }
    }
    let dq = conservation::div_q(q);
    let rhs: Vec<f64> = dq.iter().flat_map(|f| rows.iter().map(|&k| -f.data()[k])).collect();
    let gram = nalgebra::DMatrix::from_fn(ncol, ncol, |r, c| dot(&cols[r], &cols[c]));
    let atb = nalgebra::DVector::from_fn(ncol, |r, _| dot(&cols[r], &rhs));
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = GRAM_CUTOFF * smax.max(1e-300);
    let rank = svd.singular_values.iter().filter(|&&sv| sv > eps).count();
    let coef = svd.solve(&atb, eps).map_err(|e| GridError::Format(e.to_string()))?;
    let bf: Vec<Complex64> = (0..g.len())
        .map(|k| {
            let w: Complex64 = modes
                .iter()
                .enumerate()
                .map(|(t, &(i, j))| {
                    let p = scaled[k].0[i] * scaled[k].1[j];
                    Complex64::new(coef[2 * t] * p, coef[2 * t + 1] * p)
                })
                .sum();
            w * (-lam[k]).exp()
        })
        .collect();
    let kf = k_flux(b, &bf);
    let flux = [fields::add(&q[0], &kf[0]), fields::add(&q[1], &kf[1])];
    let div_defect = fields::max_window(&conservation::div_q(&flux));
    let l = conservation::recover_l(&flux)?;
    Ok(ConformalPotential { flux, l, div_defect, rank })
}

#[derive(Debug, Clone)]
pub struct ConformalData {
    /// `A = 2 <d_z L, e_z>`
    pub a: CField,
    /// `f = -i e^lambda (A + 2i e^lambda H_0^* . H)`
    pub f: CField,
    /// `|| d_{z*} f ||_{L2} / || f ||_{L2}` on the interior window, 0 when `|| f || < 1e-12`.
    pub holomorphy_defect: f64,
}

/// How `d_z L` is obtained.
#[derive(Debug, Clone, Copy)]
pub enum DzSource<'a> {
    /// Differencing a sampled potential.
    Field(&'a [Field]),
    /// From a flux `G` standing for `grad_perp L`: `d_z L = (G_2 + i G_1) / 2`.
    Flux(&'a Flux),
}

impl DzSource<'_> {
    pub fn dz(&self) -> Vec<CField> {
        match self {
            DzSource::Field(l) => fields::cd_z(&fields::complexify(l)),
            DzSource::Flux(g) => conservation::dz_of_flux(g),
        }
    }
}

pub fn extract_a_f(b: &GeometryBundle, l: DzSource<'_>) -> ConformalData {
    let i = Complex64::i();
    let dzl = l.dz();
    let hh = conservation::h0star_dot_h(b);
    let lam = b.lambda().data();
    let mut a = vec![Complex64::new(0.0, 0.0); b.grid.len()];
    let mut f = a.clone();
    for k in 0..b.grid.len() {
        let ez = cat(&b.frames.ez, k);
        let d = cat(&dzl, k);
        a[k] = 2.0 * d.iter().zip(&ez).map(|(x, y)| x * y).sum::<Complex64>();
        let el = lam[k].exp();
        f[k] = -i * el * (a[k] + 2.0 * i * el * hh.data()[k]);
    }
    let a = Field::from_vec(b.grid, a).unwrap();
    let f = Field::from_vec(b.grid, f).unwrap();
    let fnorm = f.l2_window(INTERIOR);
    let holomorphy_defect =
        if fnorm < 1e-12 { 0.0 } else { diskgrid::d_zstar(&f).l2_window(INTERIOR) / fnorm };
    ConformalData { a, f, holomorphy_defect }
}

/// `Delta_perp H + sum h^a_ij h^b_ij H^b n_a - 2|H|^2 H - e^{-2 lambda} Re(f H_0)`,
/// with `Delta_perp H = e^{-2 lambda} pi_n div(pi_n grad H)`.
pub fn conformal_willmore_residual(b: &GeometryBundle, f: &CField) -> Vec<Field> {
    let m = b.m;
    let dh = [fields::d1(&b.mean), fields::d2(&b.mean)];
    let pn = [b.pi_n_field(&dh[0]), b.pi_n_field(&dh[1])];
    let dv = fields::add(&fields::d1(&pn[0]), &fields::d2(&pn[1]));
    tabulate(b.grid, m, |k| {
        let w = (-2.0 * b.lambda().data()[k]).exp();
        let lap_perp: Vec<f64> = b.pi_n(k, &at(&dv, k)).iter().map(|x| w * x).collect();
        let h = b.mean_at(k);
        let h2 = dot(&h, &h);
        let la = b.m - 2;
        let hb: Vec<f64> = (0..la).map(|a| dot(&h, &b.frames.normal_at(a, k))).collect();
        let mut out = vec![0.0; m];
        for a in 0..la {
            let na = b.frames.normal_at(a, k);
            let mut coef = 0.0;
            for (beta, hbeta) in hb.iter().enumerate() {
                let hh: f64 = (0..4).map(|ij| b.h[a][ij].data()[k] * b.h[beta][ij].data()[k]).sum();
                coef += hh * hbeta;
            }
            for c in 0..m {
                out[c] += coef * na[c];
            }
        }
        let fk = f.data()[k];
        let h0 = b.h0_at(k);
        (0..m).map(|c| lap_perp[c] + out[c] - 2.0 * h2 * h[c] - w * (fk * h0[c]).re).collect()
    })
}

/// Report keys owned by this module.
pub const REPORT_KEYS: [&str; 7] =
    ["a4_resid", "a5_resid", "codazzi_resid", "f_inf", "f_holo_defect", "cw_resid_f", "cw_resid_zero"];

/// Full complex-frame analysis of one bundle.
#[derive(Debug, Clone)]
pub struct ConformalReport {
    pub potential: ConformalPotential,
    pub data: ConformalData,
    pub residual_report: BTreeMap<String, f64>,
}

impl ConformalReport {
    pub fn compute(b: &GeometryBundle, q: &Flux) -> Result<ConformalReport, GridError> {
        let (a4, a5) = frame_derivative_residuals(b);
        let potential = conformal_potential(b, q)?;
        let data = extract_a_f(b, DzSource::Flux(&potential.flux));
        let zero = CField::zeros(b.grid);
        let mut rep = BTreeMap::new();
        rep.insert("a4_resid".into(), a4);
        rep.insert("a5_resid".into(), a5);
        rep.insert("codazzi_resid".into(), codazzi_residual(b));
        rep.insert("f_inf".into(), data.f.max_abs_window(INTERIOR));
        rep.insert("f_holo_defect".into(), data.holomorphy_defect);
        rep.insert("cw_resid_f".into(), fields::max_window(&conformal_willmore_residual(b, &data.f)));
        rep.insert("cw_resid_zero".into(), fields::max_window(&conformal_willmore_residual(b, &zero)));
        Ok(ConformalReport { potential, data, residual_report: rep })
    }
}

/// Complex vector field `H_0 f`, for diagnostics.
pub fn h0_times_f(b: &GeometryBundle, f: &CField) -> Vec<CField> {
    ctabulate(b.grid, b.m, |k| b.h0_at(k).iter().map(|z| z * f.data()[k]).collect())
}

/// Extra diagnostic key for `Delta Phi = 2 e^{2 lambda} H`.
pub const LAPLACE_PHI_KEY: &str = "laplace_phi";

/// Conservation and complex-frame analysis of one bundle, with `cwbis_resid` filled in.
#[derive(Debug, Clone)]
pub struct SurfaceReport {
    pub conservation: conservation::ConservationBundle,
    pub conformal: ConformalReport,
    pub residual_report: BTreeMap<String, f64>,
}

impl SurfaceReport {
    pub fn compute(b: &GeometryBundle) -> Result<SurfaceReport, GridError> {
        let cons = conservation::ConservationBundle::compute(b)?;
        let conf = ConformalReport::compute(b, &cons.q)?;
        let lap = conservation::lap_of_flux(&conf.potential.flux);
        let cw = conservation::cwbis_residual(b, &lap, &cons.l0, &conf.data.f);
        let mut rep = cons.residual_report.clone();
        rep.insert("cwbis_resid".into(), cw);
        rep.extend(conf.residual_report.iter().map(|(k, v)| (k.clone(), *v)));
        rep.insert(LAPLACE_PHI_KEY.into(), conservation::laplace_phi_residual(b));
        Ok(SurfaceReport { conservation: cons, conformal: conf, residual_report: rep })
    }

    /// All keys in contract order, followed by the extra diagnostic.
    pub fn keys() -> impl Iterator<Item = &'static str> {
        conservation::REPORT_KEYS.into_iter().chain(REPORT_KEYS).chain([LAPLACE_PHI_KEY])
    }
}
