//! Near-identity diffeomorphisms `phi = id + u` with `u` an asymptotic function.

use rayon::prelude::*;

use crate::asymfun::{sample_numeric, sample_tail, AsymFunction, SpaceMeta};
use crate::error::{Error, Result};
use crate::grid::{d1, Grid};
use crate::remainder::Remainder;
use crate::tail::{NumericTail, TailExpansion};

pub const DEFAULT_MARGIN: f64 = 1e-6;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

/// `phi = id + u` with a certified lower bound on `phi'`.
#[derive(Clone, Debug)]
pub struct AsymDiffeo {
    u: AsymFunction,
    phi_prime_min: f64,
    tail_deriv: NumericTail,
}

impl AsymDiffeo {
    pub fn identity(grid: Grid, meta: SpaceMeta) -> Self {
        Self::validate(AsymFunction::zero(grid, meta), DEFAULT_MARGIN).expect("identity is valid")
    }

    /// Certifies `inf (1 + u') > margin` on the grid and, through a bound on
    /// the derivative tail, beyond it.
    pub fn validate(u: AsymFunction, margin: f64) -> Result<Self> {
        let grid = *u.grid();
        let rem_deriv = d1(u.rem().samples(), grid.h);
        let dtail = u.tail().derivative();
        let tail_deriv = dtail.numeric();
        let td = sample_numeric(&tail_deriv, &grid);
        let mut min = f64::INFINITY;
        let mut at = 0.0;
        for (i, (r, t)) in rem_deriv.iter().zip(&td).enumerate() {
            let x = grid.x(i);
            let v = 1.0 + r + t;
            if !(v >= min) {
                min = v;
                at = x;
            }
        }
        let beyond = 1.0 - tail_deriv.sup_beyond(grid.half_width);
        if beyond < min {
            min = beyond;
            at = f64::INFINITY;
        }
        if !(min > margin) {
            return Err(Error::NotADiffeomorphism { x: at, value: min });
        }
        Ok(AsymDiffeo { u, phi_prime_min: min, tail_deriv })
    }

    pub fn displacement(&self) -> &AsymFunction {
        &self.u
    }

    pub fn into_displacement(self) -> AsymFunction {
        self.u
    }

    pub fn phi_prime_min(&self) -> f64 {
        self.phi_prime_min
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn apply(&self, x: f64) -> f64 {
        x + self.u.eval(x)
    }

    /// `phi(x_i)` at every node.
    pub fn image(&self) -> Vec<f64> {
        let grid = *self.grid();
        let vals = self.u.values();
        vals.iter().enumerate().map(|(i, w)| grid.x(i) + w).collect()
    }

    /// `u'(y)` at an arbitrary point.
    pub fn displacement_deriv(&self, y: f64) -> f64 {
        let grid = self.grid();
        let t = self.tail_deriv.eval(y);
        if grid.contains(y) {
            t + self.u.rem().spline().eval_with_deriv(grid, y).1
        } else {
            let d = 1e-4 * grid.half_width.max(1.0);
            let far = self.u.rem().far();
            t + (far.eval(y + d) - far.eval(y - d)) / (2.0 * d)
        }
    }

    fn check_domain(&self) -> Result<()> {
        let grid = self.grid();
        let l = grid.half_width;
        let slack = 0.25 * l;
        for edge in [-l, l] {
            let image = self.apply(edge);
            if (image.abs() - l).abs() > slack || image.signum() != edge.signum() {
                return Err(Error::OutOfDomain { edge, image });
            }
        }
        Ok(())
    }

    /// `(id + u1) o (id + u2) = id + u2 + u1 o (id + u2)`.
    pub fn compose(&self, other: &AsymDiffeo) -> Result<AsymDiffeo> {
        let inner = compose_fn(&self.u, other)?;
        let u = other.u.add(&inner)?;
        AsymDiffeo::validate(u, DEFAULT_MARGIN)
    }

    pub fn invert(&self) -> Result<AsymDiffeo> {
        self.invert_with(DEFAULT_NEWTON_TOL)
    }

    /// Per-node Newton solve of `y + u(y) = x_i` with a bisection safeguard.
    pub fn invert_with(&self, tol: f64) -> Result<AsymDiffeo> {
        self.check_domain()?;
        let grid = *self.grid();
        let n = grid.len();
        let image = self.image();
        let bound = self.u.values().iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1e-12;
        let guesses = initial_guesses(&grid, &image, &self.u);
        let roots: Result<Vec<f64>> = (0..n)
            .into_par_iter()
            .with_min_len(4096)
            .map(|i| self.solve_node(grid.x(i), guesses[i], bound, tol))
            .collect();
        let roots = roots?;

        let meta = self.u.meta();
        let keep = (2 * meta.lead).min(meta.decay);
        let tail = self.u.tail().split_above(keep).0.scale(&crate::tail::int(-1));
        let t = sample_tail(&tail, &grid);
        let xs = grid.xs();
        let samples: Vec<f64> = (0..n).map(|i| roots[i] - xs[i] - t[i]).collect();
        let out_meta = SpaceMeta { decay: keep, ..meta };
        let u = AsymFunction::assemble(tail, Remainder::new(grid, samples, keep)?, out_meta);
        AsymDiffeo::validate(u, DEFAULT_MARGIN)
    }

    /// `u(y)` and `u'(y)` sharing the bracket and interpolation weights.
    fn value_and_deriv(&self, y: f64) -> (f64, f64) {
        let grid = self.grid();
        if !grid.contains(y) {
            return (self.u.eval(y), self.displacement_deriv(y));
        }
        let r = 1.0 / (1.0 + y * y).sqrt();
        let (s, ds) = self.u.rem().spline().eval_with_deriv(grid, y);
        (self.u.numeric_tail().eval_with(y, r) + s, self.tail_deriv.eval_with(y, r) + ds)
    }

    /// Plain Newton from a close guess; falls back to the bracketed solve if
    /// it stalls or leaves the trust region.
    fn solve_node(&self, x: f64, guess: f64, bound: f64, tol: f64) -> Result<f64> {
        let mut y = guess;
        for _ in 0..8 {
            let (u, du) = self.value_and_deriv(y);
            let fy = y + u - x;
            let dfy = 1.0 + du;
            if !(dfy > 0.0) {
                break;
            }
            let step = fy / dfy;
            y -= step;
            if !((y - x).abs() <= bound + 1.0) {
                break;
            }
            if step.abs() <= tol * y.abs().max(1.0) {
                return Ok(y);
            }
        }
        self.solve_bracketed(x, guess, bound, tol)
    }

    fn solve_bracketed(&self, x: f64, guess: f64, bound: f64, tol: f64) -> Result<f64> {
        let f = |y: f64| y + self.u.eval(y) - x;
        let mut lo = x - bound;
        let mut hi = x + bound;
        let mut widen = 0;
        while f(lo) > 0.0 || f(hi) < 0.0 {
            lo -= bound.max(1.0);
            hi += bound.max(1.0);
            widen += 1;
            if widen > 60 {
                return Err(Error::NoConvergence { x });
            }
        }
        let mut y = guess.clamp(lo, hi);
        for _ in 0..NEWTON_MAX_ITER {
            let fy = f(y);
            if fy == 0.0 {
                return Ok(y);
            }
            if fy < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let dfy = 1.0 + self.displacement_deriv(y);
            let mut next = y - fy / dfy;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - y).abs();
            y = next;
            if step <= tol * y.abs().max(1.0) || hi - lo <= tol * y.abs().max(1.0) {
                return Ok(y);
            }
        }
        Err(Error::NoConvergence { x })
    }
}

/// Linear interpolation of the inverse from the monotone nodal image.
fn initial_guesses(grid: &Grid, image: &[f64], u: &AsymFunction) -> Vec<f64> {
    let n = grid.len();
    let mut out = vec![0.0; n];
    let mut j = 0usize;
    let left_shift = u.eval(-grid.half_width);
    let right_shift = u.eval(grid.half_width);
    for (i, o) in out.iter_mut().enumerate() {
        let x = grid.x(i);
        if x <= image[0] {
            *o = x - left_shift;
            continue;
        }
        if x >= image[n - 1] {
            *o = x - right_shift;
            continue;
        }
        while j + 1 < n - 1 && image[j + 1] <= x {
            j += 1;
        }
        let span = image[j + 1] - image[j];
        let t = if span > 0.0 { (x - image[j]) / span } else { 0.0 };
        *o = grid.x(j) + t * grid.h;
    }
    out
}

/// `v o phi`. Tail terms of `v` with index up to `lead(v) + lead(phi - id)`
/// are copied unchanged; everything else is captured by the remainder.
pub fn compose_fn(v: &AsymFunction, phi: &AsymDiffeo) -> Result<AsymFunction> {
    let grid = *v.grid();
    grid.check_same(phi.grid())?;
    phi.check_domain()?;
    let vm = v.meta();
    let pm = phi.displacement().meta();
    let keep = (vm.lead + pm.lead).min(vm.decay);
    let tail = v.tail().split_above(keep).0;
    let out_t = sample_tail(&tail, &grid);
    let full_t = v.numeric_tail();
    let image = phi.image();
    let rem = v.rem();
    let samples: Vec<f64> = image
        .par_iter()
        .with_min_len(4096)
        .enumerate()
        .map(|(i, y)| full_t.eval(*y) + rem.eval(*y) - out_t[i])
        .collect();
    let meta = SpaceMeta { decay: keep, regularity: vm.regularity.min(pm.regularity), ..vm };
    Ok(AsymFunction::assemble(tail, Remainder::new(grid, samples, keep)?, meta))
}

/// Result of integrating `phi' = u(t) o phi` from the identity.
#[derive(Clone, Debug)]
pub struct Flow {
    pub end: AsymDiffeo,
    pub path: Vec<(f64, AsymDiffeo)>,
}

/// RK4 integration of `d/dt phi = u(t) o phi`, `phi(0) = id`, validating
/// `phi` after every step.
pub fn flow<F>(field: F, t_end: f64, dt: f64, keep_path: bool) -> Result<Flow>
where
    F: Fn(f64) -> Result<AsymFunction>,
{
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::Invalid(format!("need dt > 0 and T >= 0, got dt={dt}, T={t_end}")));
    }
    let u0 = field(0.0)?;
    let mut phi = AsymDiffeo::identity(*u0.grid(), u0.meta());
    let steps = (t_end / dt).round().max(0.0) as usize;
    let mut path = Vec::new();
    if keep_path {
        path.push((0.0, phi.clone()));
    }
    let lost = |t: f64, e: Error| Error::DiffeoLost { t, reason: e.to_string() };
    for s in 0..steps {
        let t = s as f64 * dt;
        let w = phi.displacement().clone();
        let stage = |tt: f64, base: &AsymFunction| -> Result<AsymFunction> {
            let p = AsymDiffeo::validate(base.clone(), DEFAULT_MARGIN).map_err(|e| lost(tt, e))?;
            compose_fn(&field(tt)?, &p)
        };
        let k1 = compose_fn(&field(t)?, &phi)?;
        let k2 = stage(t + 0.5 * dt, &AsymFunction::lin_comb(&[(1.0, &w), (0.5 * dt, &k1)])?)?;
        let k3 = stage(t + 0.5 * dt, &AsymFunction::lin_comb(&[(1.0, &w), (0.5 * dt, &k2)])?)?;
        let k4 = stage(t + dt, &AsymFunction::lin_comb(&[(1.0, &w), (dt, &k3)])?)?;
        let next = AsymFunction::lin_comb(&[
            (1.0, &w),
            (dt / 6.0, &k1),
            (dt / 3.0, &k2),
            (dt / 3.0, &k3),
            (dt / 6.0, &k4),
        ])?;
        phi = AsymDiffeo::validate(next, DEFAULT_MARGIN).map_err(|e| lost(t + dt, e))?;
        if keep_path {
            path.push((t + dt, phi.clone()));
        }
    }
    Ok(Flow { end: phi, path })
}

/// Tail of `-u` restricted to the range an inverse copies exactly.
pub fn inverse_tail(u: &AsymFunction) -> TailExpansion {
    let meta = u.meta();
    u.tail().split_above((2 * meta.lead).min(meta.decay)).0.scale(&crate::tail::int(-1))
}
