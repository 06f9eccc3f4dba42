//! Willmore-energy descent with a frozen boundary ring.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::conservation;
use crate::diskgrid::{self, Field, GridError};
use crate::immersion::{self, GeometryBundle, ImmersionPatch, PatchError};

/// Width of the frozen boundary ring.
pub const FROZEN_RING: usize = 2;

/// Finite-difference `div Q` is consistent only from this offset inward;
/// descent velocities and the residual tested by [`ps_norm`] are supported there.
pub const ACTIVE_OFFSET: usize = 5;

/// Default stop threshold in units of `h^2`.
pub const PS_FLOOR: f64 = 10.0;

/// Backtracking stops once `tau < BACKTRACK_FLOOR * tau0`.
pub const BACKTRACK_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("trial step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn mask_to(f: &Field, offset: usize) -> Field {
    let g = *f.grid();
    let n = g.n();
    let mut out = f.clone();
    for (k, x) in out.data_mut().iter_mut().enumerate() {
        let (i, j) = (k % n, k / n);
        if i.min(j).min(n - 1 - i).min(n - 1 - j) < offset {
            *x = 0.0;
        }
    }
    out
}

/// `sum_c ||grad phi_c||_2` with `Delta phi_c = (div Q)_c` restricted to
/// offset [`ACTIVE_OFFSET`], `phi_c = 0` on the boundary.
pub fn ps_norm(b: &GeometryBundle) -> Result<f64, GridError> {
    let dq = conservation::div_q(&conservation::assemble_q(b));
    let zero = Field::zeros(b.grid);
    let mut total = 0.0;
    for f in &dq {
        let (phi, _) = diskgrid::poisson_dirichlet(&mask_to(f, ACTIVE_OFFSET), &zero)?;
        let g = diskgrid::grad(&phi);
        total += g[0].zip_map(&g[1], |a, c| a * a + c * c).integrate().sqrt();
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub patch: ImmersionPatch,
    pub energy: f64,
    pub ps_norm: f64,
    pub conformal_defect: f64,
    /// Accepted step size, 0 for the initial state.
    pub step: f64,
    /// No decreasing step was found.
    pub stalled: bool,
}

impl FlowState {
    /// Evaluates a patch by finite differences; analytic jets are dropped so
    /// that every state of a run shares one discretization.
    pub fn new(patch: &ImmersionPatch) -> Result<FlowState, FlowError> {
        let patch = patch.without_jets();
        let b = immersion::geometry(&patch)?;
        Ok(FlowState {
            energy: immersion::willmore_energy(&b),
            ps_norm: ps_norm(&b)?,
            conformal_defect: b.frames.conformal_defect,
            patch,
            step: 0.0,
            stalled: false,
        })
    }
}

/// Smoothing applied to the raw velocity before the line search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// Raw `-e^{-2 lambda} willmore_residual`.
    None,
    /// `(-Delta)^{-1}` with zero Dirichlet data.
    Laplace,
    /// `Delta^{-2}` with zero Dirichlet data on `u` and `Delta u`.
    #[default]
    Bilaplace,
}

impl Preconditioner {
    fn apply(self, v: &Field) -> Result<Field, GridError> {
        let zero = Field::zeros(*v.grid());
        Ok(match self {
            Preconditioner::None => v.clone(),
            Preconditioner::Laplace => -&diskgrid::poisson_dirichlet(v, &zero)?.0,
            Preconditioner::Bilaplace => {
                let w = diskgrid::poisson_dirichlet(v, &zero)?.0;
                diskgrid::poisson_dirichlet(&w, &zero)?.0
            }
        })
    }
}

/// Energy of a candidate patch; degenerate candidates count as infinite.
fn candidate_energy(p: &ImmersionPatch) -> f64 {
    match immersion::geometry(p) {
        Ok(b) => immersion::willmore_energy(&b),
        Err(_) => f64::INFINITY,
    }
}

/// One descent step `Phi - tau P(pi_n e^{-2 lambda} willmore_residual)`,
/// halving `tau` from `tau0` until the energy decreases. The velocity is
/// supported at offset [`ACTIVE_OFFSET`] and beyond, so the outer
/// [`FROZEN_RING`] never moves.
pub fn step(state: &FlowState, tau0: f64, pre: Preconditioner) -> Result<FlowState, FlowError> {
    if !(tau0 > 0.0 && tau0.is_finite()) {
        return Err(FlowError::BadStep(tau0));
    }
    let b = immersion::geometry(&state.patch)?;
    let g = b.grid;
    let wr = conservation::willmore_residual(&b);
    let lam = b.lambda();
    let raw: Vec<Field> =
        wr.iter().map(|f| mask_to(&f.zip_map(lam, |x, l| x * (-2.0 * l).exp()), ACTIVE_OFFSET)).collect();
    let vel: Vec<Field> = b
        .pi_n_field(&raw)
        .iter()
        .map(|v| Ok(mask_to(&pre.apply(v)?, ACTIVE_OFFSET)))
        .collect::<Result<_, GridError>>()?;
    let stalled = || FlowState { stalled: true, step: 0.0, ..state.clone() };
    if vel.iter().all(|v| v.max_abs() == 0.0) {
        return Ok(stalled());
    }
    let mut tau = tau0;
    while tau >= BACKTRACK_FLOOR * tau0 {
        let phi: Vec<Field> = state.patch.phi.iter().zip(&vel).map(|(p, v)| p - &(v * tau)).collect();
        if let Ok(cand) = ImmersionPatch::from_samples(g, phi, state.patch.label.clone()) {
            let e = candidate_energy(&cand);
            if e < state.energy {
                let mut next = FlowState::new(&cand)?;
                next.step = tau;
                return Ok(next);
            }
        }
        tau *= 0.5;
    }
    Ok(stalled())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub ps_norm: f64,
    pub conformal_defect: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    Stalled,
    MaxIters,
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
    pub last: FlowState,
    /// Error text when the run aborted on a degenerate patch.
    pub abort: Option<String>,
}

impl FlowTrace {
    pub fn energies_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].energy <= w[0].energy)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub max_iters: usize,
    /// Stop once `ps_norm <= stop`; `None` uses [`floor_threshold`].
    pub stop: Option<f64>,
    /// Upper bound of the trial step.
    pub tau0: f64,
    /// Each trial starts at `min(tau0, growth * previous accepted step)`.
    pub growth: f64,
    pub preconditioner: Preconditioner,
}

impl Default for FlowOptions {
    fn default() -> FlowOptions {
        FlowOptions { max_iters: 500, stop: None, tau0: 1.0, growth: 2.0, preconditioner: Preconditioner::default() }
    }
}

/// Discretization floor of [`ps_norm`], [`PS_FLOOR`] `h^2`.
pub fn floor_threshold(g: &diskgrid::Grid) -> f64 {
    PS_FLOOR * g.h() * g.h()
}

/// Iterates [`step`] until the threshold, a stall, `max_iters` or a degenerate patch.
pub fn run(patch: &ImmersionPatch, opts: FlowOptions) -> Result<FlowTrace, FlowError> {
    if !(opts.tau0 > 0.0 && opts.tau0.is_finite()) {
        return Err(FlowError::BadStep(opts.tau0));
    }
    let mut state = FlowState::new(patch)?;
    let stop = opts.stop.unwrap_or_else(|| floor_threshold(&patch.grid));
    let row = |iter: usize, s: &FlowState| TraceRow {
        iter,
        energy: s.energy,
        ps_norm: s.ps_norm,
        conformal_defect: s.conformal_defect,
        tau: s.step,
    };
    let mut rows = vec![row(0, &state)];
    let mut trial = opts.tau0;
    for iter in 1..=opts.max_iters {
        if state.ps_norm <= stop {
            return Ok(FlowTrace { rows, stop: StopReason::Threshold, last: state, abort: None });
        }
        let next = match step(&state, trial, opts.preconditioner) {
            Ok(s) => s,
            Err(FlowError::Patch(e)) => {
                return Ok(FlowTrace { rows, stop: StopReason::Degenerate, last: state, abort: Some(e.to_string()) });
            }
            Err(e) => return Err(e),
        };
        if next.stalled {
            return Ok(FlowTrace { rows, stop: StopReason::Stalled, last: state, abort: None });
        }
        trial = (next.step * opts.growth).min(opts.tau0);
        state = next;
        rows.push(row(iter, &state));
    }
    let reason = if state.ps_norm <= stop { StopReason::Threshold } else { StopReason::MaxIters };
    Ok(FlowTrace { rows, stop: reason, last: state, abort: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diskgrid::Grid;
    use crate::immersion::{Surface, make_surface};

    fn patch(s: Surface, n: usize) -> ImmersionPatch {
        make_surface(&s, 3, Grid::new(0.4, n).unwrap()).unwrap()
    }

    #[test]
    fn plane_does_not_move() {
        let st = FlowState::new(&patch(Surface::Plane, 33)).unwrap();
        assert_eq!(st.ps_norm, 0.0);
        let next = step(&st, 1.0, Preconditioner::default()).unwrap();
        assert!(next.stalled);
        assert_eq!(next.energy, st.energy);
        assert_eq!(next.patch.phi, st.patch.phi);
    }

    #[test]
    fn zero_step_rejected() {
        let st = FlowState::new(&patch(Surface::Plane, 33)).unwrap();
        assert!(matches!(step(&st, 0.0, Preconditioner::None), Err(FlowError::BadStep(_))));
        let opts = FlowOptions { tau0: f64::NAN, ..FlowOptions::default() };
        assert!(run(&st.patch, opts).is_err());
    }

    #[test]
    fn graph_first_step_descends_and_freezes_ring() {
        let p = patch(Surface::GraphPerturbation { seed: 1, amplitude: 0.05 }, 33);
        let st = FlowState::new(&p).unwrap();
        for pre in [Preconditioner::None, Preconditioner::Laplace, Preconditioner::Bilaplace] {
            let next = step(&st, 1.0, pre).unwrap();
            assert!(!next.stalled, "{pre:?}");
            assert!(next.energy < st.energy, "{pre:?}");
            let g = p.grid;
            for j in 0..g.n() {
                for i in 0..g.n() {
                    if i.min(j).min(g.n() - 1 - i).min(g.n() - 1 - j) < FROZEN_RING {
                        let k = g.idx(i, j);
                        for c in 0..3 {
                            assert_eq!(next.patch.phi[c].data()[k], st.patch.phi[c].data()[k]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_stops_at_floor() {
        let t = run(&patch(Surface::Sphere { rho: 1.0 }, 65), FlowOptions::default()).unwrap();
        assert_eq!(t.stop, StopReason::Threshold);
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn short_run_trace() {
        let p = patch(Surface::PerturbedCatenoid { amplitude: 0.05 }, 33);
        let t = run(&p, FlowOptions { max_iters: 5, ..FlowOptions::default() }).unwrap();
        assert_eq!(t.stop, StopReason::MaxIters);
        assert_eq!(t.rows.len(), 6);
        assert!(t.energies_non_increasing());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,energy,ps_norm,conformal_defect,tau\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
