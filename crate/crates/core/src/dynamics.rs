//! The b-family in Lagrangian variables.
//!
//! With `phi` the particle map and `v = u o phi`, the equation becomes the ODE
//!
//! ```text
//!   phi_t = v,    v_t = ((1 - d^2/dx^2)^-1 beta(u)) o phi,    u = v o phi^-1
//!   beta(u) = -b u u_x - (3 - b) u_x u_xx
//! ```
//!
//! integrated here with classical RK4. The default right-hand side inverts
//! `phi` explicitly; the conjugated one works in Lagrangian variables
//! throughout and solves a variable-coefficient boundary value problem.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::asymfun::{sample_tail, AsymFunction, Flavor, SpaceMeta, DEFAULT_BOUNDARY_TOL, DEFAULT_MAX_INDEX};
use crate::diffeo::{compose_fn, AsymDiffeo, DEFAULT_MARGIN, DEFAULT_NEWTON_TOL};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::helmholtz::{conjugated_solve, inverse_meta, lambda_apply, lambda_inverse};
use crate::remainder::Remainder;
use crate::tail::TailExpansion;

/// Route used to apply `(1 - d^2/dx^2)^-1` inside the vector field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldPath {
    /// Invert `phi`, work in Eulerian variables, compose back.
    #[default]
    Default,
    /// Lagrangian form of `beta` plus a conjugated tridiagonal solve.
    Conjugated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub b: f64,
    pub dt: f64,
    pub t_end: f64,
    pub grid: Grid,
    pub path: FieldPath,
    pub boundary_tol: f64,
    pub newton_tol: f64,
    pub margin: f64,
    pub max_index: u32,
    /// Keep every `cadence`-th step as a snapshot.
    pub cadence: usize,
    /// Advective guard factor: `dt <= guard * h / max(1, sup|u0|)`.
    pub stability_guard: f64,
}

impl SolverConfig {
    pub fn new(b: f64, dt: f64, t_end: f64, grid: Grid) -> Self {
        SolverConfig {
            b,
            dt,
            t_end,
            grid,
            path: FieldPath::Default,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            newton_tol: DEFAULT_NEWTON_TOL,
            margin: DEFAULT_MARGIN,
            max_index: DEFAULT_MAX_INDEX,
            cadence: 100,
            stability_guard: 0.5,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Checks time step, horizon and the advective guard against `u0`.
    pub fn check(&self, u0: &AsymFunction) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Invalid(format!("T must be positive, got {}", self.t_end)));
        }
        let ratio = self.t_end / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Invalid(format!("T = {} is not a whole number of steps of dt = {}", self.t_end, self.dt)));
        }
        if self.cadence == 0 {
            return Err(Error::Invalid("output cadence must be at least 1".into()));
        }
        let sup = u0.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let limit = self.stability_guard * self.grid.h / sup.max(1.0);
        if self.dt > limit {
            return Err(Error::Invalid(format!(
                "dt = {} exceeds the advective limit {limit:.3e} (guard {} * h / max(1, sup|u0| = {sup:.3}))",
                self.dt, self.stability_guard
            )));
        }
        check_space(&u0.meta())
    }
}

/// Solutions need three derivatives, and decaying data needs a tail that
/// starts at index 1 or later.
pub fn check_space(meta: &SpaceMeta) -> Result<()> {
    if meta.regularity < 3 {
        return Err(Error::Regularity { have: meta.regularity, need: 3 });
    }
    if meta.flavor == Flavor::W && meta.lead < 1 {
        return Err(Error::Invalid("W-flavor data needs tail index >= 1".into()));
    }
    Ok(())
}

/// `(phi, v)` at time `t`.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub t: f64,
    pub phi: AsymDiffeo,
    pub v: AsymFunction,
    pub initial_meta: SpaceMeta,
    pub b: f64,
}

impl SolverState {
    pub fn initial(u0: AsymFunction, b: f64) -> Self {
        let meta = u0.meta();
        SolverState { t: 0.0, phi: AsymDiffeo::identity(*u0.grid(), meta), v: u0, initial_meta: meta, b }
    }

    /// Eulerian velocity `u = v o phi^-1`.
    pub fn eulerian(&self, newton_tol: f64) -> Result<AsymFunction> {
        compose_fn(&self.v, &self.phi.invert_with(newton_tol)?)
    }
}

/// `-b u u' - (3 - b) u' u''`, relabeled into the space the Helmholtz
/// inverse expects.
pub fn beta(u: &AsymFunction, b: f64, max_index: u32) -> Result<AsymFunction> {
    let meta = u.meta();
    if meta.regularity < 3 {
        return Err(Error::Regularity { have: meta.regularity, need: 3 });
    }
    let du = u.derivative()?;
    let ddu = du.derivative()?;
    let uu = u.product_capped(&du, max_index)?;
    let dd = du.product_capped(&ddu, max_index)?;
    let out = AsymFunction::lin_comb(&[(-b, &uu), (-(3.0 - b), &dd)])?;
    Ok(out.relabel(beta_meta(meta)))
}

pub fn beta_meta(meta: SpaceMeta) -> SpaceMeta {
    let m = meta.regularity.saturating_sub(2).max(1);
    match meta.flavor {
        Flavor::W => SpaceMeta { decay: meta.decay + 2, regularity: m, ..meta },
        Flavor::H => SpaceMeta { lead: (2 * meta.lead + 1).min(meta.decay + 1), regularity: m, ..meta },
    }
}

/// Space of `v_t` produced by the default path.
pub fn field_meta(v: SpaceMeta, phi: SpaceMeta) -> SpaceMeta {
    let inv = SpaceMeta { decay: (2 * phi.lead).min(phi.decay), ..phi };
    let u = compose_meta(v, inv);
    compose_meta(inverse_meta(beta_meta(u)), phi)
}

fn compose_meta(v: SpaceMeta, phi: SpaceMeta) -> SpaceMeta {
    SpaceMeta { decay: (v.lead + phi.lead).min(v.decay), regularity: v.regularity.min(phi.regularity), ..v }
}

/// `1/phi' - 1` for `phi' = 1 + dw`: tail from the truncated geometric
/// series, remainder from the nodal values.
pub fn reciprocal_part(dw: &AsymFunction) -> Result<AsymFunction> {
    let meta = dw.meta();
    let grid = *dw.grid();
    let neg = dw.tail().scale(&crate::tail::int(-1));
    let mut tail = TailExpansion::zero();
    let mut term = neg.clone();
    while !term.is_empty() {
        let (keep, _) = term.split_above(meta.decay);
        if keep.is_empty() {
            break;
        }
        tail = tail.add(&keep);
        term = keep.product(&neg);
    }
    let t = sample_tail(&tail, &grid);
    let vals = dw.values();
    let samples: Vec<f64> = vals.iter().zip(&t).map(|(d, t)| 1.0 / (1.0 + d) - 1.0 - t).collect();
    Ok(AsymFunction::assemble(tail, Remainder::new(grid, samples, meta.decay)?, meta))
}

/// `beta(u) o phi` written in `(phi, v)`:
/// `-b v v'/phi' + (3-b) v'^2 phi''/phi'^4 - (3-b) v' v''/phi'^3`.
pub fn lagrangian_beta(phi: &AsymDiffeo, v: &AsymFunction, b: f64, max_index: u32) -> Result<AsymFunction> {
    let w = phi.displacement();
    let dw = w.derivative()?;
    let ddw = dw.derivative()?;
    let r = reciprocal_part(&dw)?;
    let recip = |f: &AsymFunction| -> Result<AsymFunction> { f.add(&f.product_capped(&r, max_index)?) };
    let dv = v.derivative()?;
    let ddv = dv.derivative()?;
    let t1 = recip(&v.product_capped(&dv, max_index)?)?;
    let mut t2 = dv.product_capped(&dv, max_index)?.product_capped(&ddw, max_index)?;
    for _ in 0..4 {
        t2 = recip(&t2)?;
    }
    let mut t3 = dv.product_capped(&ddv, max_index)?;
    for _ in 0..3 {
        t3 = recip(&t3)?;
    }
    AsymFunction::lin_comb(&[(-b, &t1), (3.0 - b, &t2), (-(3.0 - b), &t3)])
}

/// Right-hand side `(phi_t, v_t)`.
pub fn vector_field(state: &SolverState, cfg: &SolverConfig) -> Result<(AsymFunction, AsymFunction)> {
    let dv = match cfg.path {
        FieldPath::Default => {
            let psi = state.phi.invert_with(cfg.newton_tol)?;
            let u = compose_fn(&state.v, &psi)?;
            let w = beta(&u, state.b, cfg.max_index)?;
            let z = lambda_inverse(&w)?;
            compose_fn(&z, &state.phi)?
        }
        FieldPath::Conjugated => {
            let rhs = lagrangian_beta(&state.phi, &state.v, state.b, cfg.max_index)?;
            let meta = field_meta(state.v.meta(), state.phi.displacement().meta());
            conjugated_solve(&state.phi, &rhs, meta)?
        }
    };
    Ok((state.v.clone(), dv))
}

/// `u - u''`.
pub fn momentum(u: &AsymFunction) -> Result<AsymFunction> {
    lambda_apply(u)
}

/// One classical RK4 step.
pub fn step(state: &SolverState, cfg: &SolverConfig) -> Result<SolverState> {
    let dt = cfg.dt;
    let t = state.t;
    let lost = |tt: f64, e: Error| match e {
        Error::NotADiffeomorphism { .. } | Error::NoConvergence { .. } | Error::OutOfDomain { .. } => {
            Error::DiffeoLost { t: tt, reason: e.to_string() }
        }
        other => other,
    };
    let w = state.phi.displacement();
    let v = &state.v;
    let stage = |c: f64, dw: &AsymFunction, dvv: &AsymFunction| -> Result<(AsymFunction, AsymFunction)> {
        let ws = AsymFunction::lin_comb(&[(1.0, w), (c * dt, dw)])?;
        let vs = AsymFunction::lin_comb(&[(1.0, v), (c * dt, dvv)])?;
        let phi = AsymDiffeo::validate(ws, cfg.margin).map_err(|e| lost(t + c * dt, e))?;
        let s = SolverState { t: t + c * dt, phi, v: vs, initial_meta: state.initial_meta, b: state.b };
        vector_field(&s, cfg).map_err(|e| lost(t + c * dt, e))
    };
    let (p1, a1) = vector_field(state, cfg).map_err(|e| lost(t, e))?;
    let (p2, a2) = stage(0.5, &p1, &a1)?;
    let (p3, a3) = stage(0.5, &p2, &a2)?;
    let (p4, a4) = stage(1.0, &p3, &a3)?;
    let w_next = AsymFunction::lin_comb(&[
        (1.0, w),
        (dt / 6.0, &p1),
        (dt / 3.0, &p2),
        (dt / 3.0, &p3),
        (dt / 6.0, &p4),
    ])?;
    let v_next = AsymFunction::lin_comb(&[
        (1.0, v),
        (dt / 6.0, &a1),
        (dt / 3.0, &a2),
        (dt / 3.0, &a3),
        (dt / 6.0, &a4),
    ])?;
    if !v_next.is_finite() || !w_next.is_finite() {
        return Err(Error::NonFinite { x: f64::NAN });
    }
    let phi = AsymDiffeo::validate(w_next, cfg.margin).map_err(|e| lost(t + dt, e))?;
    v_next.certify(cfg.boundary_tol)?;
    Ok(SolverState { t: t + dt, phi, v: v_next, initial_meta: state.initial_meta, b: state.b })
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub step: usize,
    /// Eulerian solution `u(t)`.
    pub u: AsymFunction,
    pub phi_prime_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Outcome {
    Completed,
    /// Integration stopped early; `t` is the last time reached.
    Stopped { t: f64, reason: String },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub outcome: Outcome,
    pub steps: usize,
    pub wall_seconds: f64,
    /// `(t, inf phi')` after every step.
    pub certificate: Vec<(f64, f64)>,
    pub final_state: SolverState,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has the initial snapshot")
    }

    /// Time up to which the diffeomorphism certificate held.
    pub fn certified_horizon(&self) -> f64 {
        match &self.outcome {
            Outcome::Completed => self.final_state.t,
            Outcome::Stopped { t, .. } => *t,
        }
    }
}

/// Integrates from `u0` to `cfg.t_end`. Configuration problems are errors;
/// failures during the integration end the run early with
/// [`Outcome::Stopped`] and keep everything computed so far.
pub fn run(cfg: &SolverConfig, u0: AsymFunction) -> Result<Trajectory> {
    cfg.check(&u0)?;
    cfg.grid.check_same(u0.grid())?;
    u0.certify(cfg.boundary_tol)?;
    let start = Instant::now();
    let mut state = SolverState::initial(u0.clone(), cfg.b);
    let mut snapshots = vec![Snapshot { t: 0.0, step: 0, u: u0, phi_prime_min: 1.0 }];
    let mut certificate = vec![(0.0, 1.0)];
    let steps = cfg.steps();
    let mut outcome = Outcome::Completed;
    let mut done = 0;
    for s in 1..=steps {
        match step(&state, cfg) {
            Ok(next) => state = next,
            Err(e) => {
                outcome = Outcome::Stopped { t: state.t, reason: e.to_string() };
                break;
            }
        }
        // pin the clock to the step count so snapshots land on exact times
        state.t = s as f64 * cfg.dt;
        done = s;
        certificate.push((state.t, state.phi.phi_prime_min()));
        if s % cfg.cadence == 0 || s == steps {
            match state.eulerian(cfg.newton_tol) {
                Ok(u) => snapshots.push(Snapshot { t: state.t, step: s, u, phi_prime_min: state.phi.phi_prime_min() }),
                Err(e) => {
                    outcome = Outcome::Stopped { t: state.t, reason: e.to_string() };
                    break;
                }
            }
        }
    }
    Ok(Trajectory {
        snapshots,
        outcome,
        steps: done,
        wall_seconds: start.elapsed().as_secs_f64(),
        certificate,
        final_state: state,
    })
}
