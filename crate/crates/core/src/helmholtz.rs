//! The operator `1 - d^2/dx^2` and its inverse.
//!
//! The inverse is the convolution with `exp(-|x|)/2`, computed as the average
//! of two exponential scans
//!
//! ```text
//!   Q+(g)(x) = int_0^inf g(x - z) e^-z dz,    Q-(g)(x) = int_0^inf g(x + z) e^-z dz
//! ```
//!
//! which satisfy `(1 + d/dx) Q+ = g` and `(1 - d/dx) Q- = g`. Each scan is a
//! first-order recursion over the grid whose per-cell increment integrates a
//! local quintic reconstruction of `g` against `e^-z` exactly. Values of `g`
//! beyond the grid come from an analytic tail plus the remainder's far-field
//! closure, integrated by a 32-point Gauss–Laguerre rule.

use crate::asymfun::{sample_numeric, sample_tail, AsymFunction, Flavor, SpaceMeta};
use crate::diffeo::AsymDiffeo;
use crate::error::{Error, Result};
use crate::grid::{d1, d2, d2_eighth, Grid};
use crate::quadrature::laguerre_integral;
use crate::remainder::Remainder;
use crate::tail::{NumericTail, TailExpansion};

/// Edge magnitude above which an untrusted far-field closure is an error.
const CLOSURE_MASS_TOL: f64 = 1e-10;

/// `int_0^1 s^p e^{-h s} ds` for `p = 0..=5`.
fn moments(h: f64) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (p, m) in out.iter_mut().enumerate() {
        let mut term = 1.0;
        let mut acc = 0.0;
        for q in 0..200 {
            let add = term / (p + q + 1) as f64;
            acc += add;
            if add.abs() < 1e-18 * acc.abs() && q > 4 {
                break;
            }
            term *= -h / (q + 1) as f64;
        }
        *m = acc;
    }
    out
}

/// Per-cell weights: `weights[o-1][m]` integrates the node `start + m`
/// contribution when the scanned node sits at offset `o` from `start`.
fn cell_weights(h: f64) -> [[f64; 6]; 5] {
    let mu = moments(h);
    let mut w = [[0.0; 6]; 5];
    for o in 1..=5 {
        for m in 0..6 {
            // Lagrange basis l_m(o - s) as a polynomial in s
            let mut poly = vec![1.0];
            for k in 0..6 {
                if k == m {
                    continue;
                }
                let den = m as f64 - k as f64;
                let c0 = (o as f64 - k as f64) / den;
                let c1 = -1.0 / den;
                let mut next = vec![0.0; poly.len() + 1];
                for (j, p) in poly.iter().enumerate() {
                    next[j] += c0 * p;
                    next[j + 1] += c1 * p;
                }
                poly = next;
            }
            w[o - 1][m] = h * poly.iter().zip(&mu).map(|(c, mu)| c * mu).sum::<f64>();
        }
    }
    w
}

fn scan(g: &[f64], h: f64, inflow: f64) -> Vec<f64> {
    let n = g.len();
    let w = cell_weights(h);
    let decay = (-h).exp();
    let mut out = vec![0.0; n];
    out[0] = inflow;
    for i in 1..n {
        let start = i.saturating_sub(3).min(n - 6);
        let wo = &w[i - start - 1];
        let gs = &g[start..start + 6];
        let local = wo[0] * gs[0] + wo[1] * gs[1] + wo[2] * gs[2] + wo[3] * gs[3] + wo[4] * gs[4] + wo[5] * gs[5];
        out[i] = decay * out[i - 1] + local;
    }
    out
}

/// Input to the scans: gridded samples plus an analytic tail. The tail is
/// added on the grid and, together with the far-field closure, supplies the
/// values beyond it.
pub struct Source<'a> {
    pub rem: &'a Remainder,
    pub tail: NumericTail,
}

impl<'a> Source<'a> {
    pub fn new(rem: &'a Remainder, tail: &TailExpansion) -> Self {
        Source { rem, tail: tail.numeric() }
    }

    pub fn plain(rem: &'a Remainder) -> Self {
        Source { rem, tail: NumericTail::default() }
    }

    fn grid(&self) -> &Grid {
        self.rem.grid()
    }

    fn samples(&self) -> Vec<f64> {
        let t = sample_numeric(&self.tail, self.grid());
        t.iter().zip(self.rem.samples()).map(|(a, b)| a + b).collect()
    }

    fn outside(&self, x: f64) -> f64 {
        self.tail.eval(x) + self.rem.far().eval(x)
    }

    fn check_closure(&self) -> Result<()> {
        let s = self.rem.samples();
        let mass = s[0].abs().max(s[s.len() - 1].abs());
        if mass > CLOSURE_MASS_TOL && !self.rem.far().trustworthy() {
            return Err(Error::MissingClosure { mass });
        }
        Ok(())
    }

    fn inflow_left(&self) -> f64 {
        let l = self.grid().half_width;
        laguerre_integral(|z| self.outside(-l - z))
    }

    fn inflow_right(&self) -> f64 {
        let l = self.grid().half_width;
        laguerre_integral(|z| self.outside(l + z))
    }
}

fn q_plus_samples(src: &Source, g: &[f64]) -> Vec<f64> {
    scan(g, src.grid().h, src.inflow_left())
}

fn q_minus_samples(src: &Source, g: &[f64]) -> Vec<f64> {
    let rev: Vec<f64> = g.iter().rev().copied().collect();
    let mut out = scan(&rev, src.grid().h, src.inflow_right());
    out.reverse();
    out
}

pub fn q_plus(src: &Source) -> Result<Remainder> {
    src.check_closure()?;
    let g = src.samples();
    Remainder::new(*src.grid(), q_plus_samples(src, &g), src.rem.decay())
}

pub fn q_minus(src: &Source) -> Result<Remainder> {
    src.check_closure()?;
    let g = src.samples();
    Remainder::new(*src.grid(), q_minus_samples(src, &g), src.rem.decay())
}

/// Both scans, run concurrently.
pub fn q_both(src: &Source) -> Result<(Vec<f64>, Vec<f64>)> {
    src.check_closure()?;
    let g = src.samples();
    Ok(rayon::join(|| q_plus_samples(src, &g), || q_minus_samples(src, &g)))
}

/// `Q(g) = (Q+(g) + Q-(g)) / 2`, the inverse of `1 - d^2/dx^2`.
pub fn q_full(src: &Source) -> Result<Remainder> {
    let (p, m) = q_both(src)?;
    let samples = p.iter().zip(&m).map(|(a, b)| 0.5 * (a + b)).collect();
    Remainder::new(*src.grid(), samples, src.rem.decay())
}

/// `u - u''`, exact on the tail and eighth-order on the remainder.
pub fn lambda_apply(u: &AsymFunction) -> Result<AsymFunction> {
    let meta = u.meta();
    if meta.regularity < 3 {
        return Err(Error::Regularity { have: meta.regularity, need: 3 });
    }
    let tail = u.tail().helmholtz();
    let grid = *u.grid();
    let d2r = d2_eighth(u.rem().samples(), grid.h);
    let samples: Vec<f64> = u.rem().samples().iter().zip(&d2r).map(|(a, b)| a - b).collect();
    let out_meta = SpaceMeta { regularity: meta.regularity - 2, ..meta };
    Ok(AsymFunction::assemble(tail, Remainder::new(grid, samples, meta.decay)?, out_meta))
}

/// Space of `(1 - d^2/dx^2)^-1 v` for `v` in `meta`.
pub fn inverse_meta(meta: SpaceMeta) -> SpaceMeta {
    let decay = match meta.flavor {
        Flavor::W => meta.decay.saturating_sub(2),
        Flavor::H => meta.decay,
    };
    SpaceMeta { decay, regularity: meta.regularity + 2, ..meta }
}

const LEFTOVER_REFINE: usize = 2;

/// `(1 - d^2/dx^2)^-1 v`: telescoping preimage on the tail, exponential scans
/// on the remainder plus the tail leftovers.
pub fn lambda_inverse(v: &AsymFunction) -> Result<AsymFunction> {
    let meta = inverse_meta(v.meta());
    let grid = *v.grid();
    if v.tail().is_empty() {
        let rem = q_full(&Source::plain(v.rem()))?.with_decay(meta.decay);
        return Ok(AsymFunction::assemble(TailExpansion::zero(), rem, meta));
    }
    let (s, _) = v.tail().helmholtz_preimage(meta.decay)?;
    // Preimage terms past the output decay would only be sampled, so drop
    // them and scan the exact leftover instead.
    let (keep, _) = s.split_above(meta.decay);
    let r = v.tail().sub(&keep.helmholtz());
    // The leftover mixes narrow high-index terms with large coefficients.
    // Scanning it on a finer grid keeps the cell-scale error of the scan,
    // which a later second difference would amplify by 1/h^2, small.
    let base = q_full(&Source::plain(v.rem()))?;
    let fine = Grid::new(grid.half_width, grid.h / LEFTOVER_REFINE as f64)?;
    let left = q_full(&Source::new(&Remainder::zeros(fine, meta.decay), &r))?;
    let samples = base.samples().iter().zip(left.samples().iter().step_by(LEFTOVER_REFINE)).map(|(a, b)| a + b);
    Ok(AsymFunction::assemble(keep, Remainder::from_parts(grid, samples.collect(), meta.decay), meta))
}

/// Solves `z - z''/phi'^2 + z' phi''/phi'^3 = rhs` on the grid with a
/// second-order tridiagonal scheme, i.e. `z = (L^-1 (rhs o phi^-1)) o phi`.
///
/// Dirichlet data at `+-L` come from the telescoped tail of `rhs`. The result
/// keeps tail terms up to `out_meta` limits, capped at the copy range
/// `lead + phi.lead`.
pub fn conjugated_solve(phi: &AsymDiffeo, rhs: &AsymFunction, out_meta: SpaceMeta) -> Result<AsymFunction> {
    let grid = *rhs.grid();
    grid.check_same(phi.displacement().grid())?;
    let n = grid.len();
    let h = grid.h;
    let w = phi.displacement();
    let dw = full_derivative(w, 1);
    let ddw = full_derivative(w, 2);
    let f = rhs.values();

    // boundary data from the far field of rhs
    let edge = |x: f64| -> Result<f64> {
        let y = phi.apply(x);
        let mut val = rhs.rem().eval(x);
        if !rhs.tail().is_empty() {
            let (s, r) = rhs.tail().helmholtz_preimage(rhs.meta().decay + 6)?;
            val += s.eval(y) + r.eval(y);
        }
        Ok(val)
    };
    let z0 = edge(-grid.half_width)?;
    let zn = edge(grid.half_width)?;

    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    let mut b = f.clone();
    b[0] = z0;
    b[n - 1] = zn;
    for i in 1..n - 1 {
        let jac = 1.0 + dw[i];
        let p = 1.0 / (jac * jac);
        let q = ddw[i] / (jac * jac * jac);
        lower[i] = -p / (h * h) - q / (2.0 * h);
        diag[i] = 1.0 + 2.0 * p / (h * h);
        upper[i] = -p / (h * h) + q / (2.0 * h);
    }
    let z = thomas(&lower, &diag, &upper, &b)?;

    let copy = out_meta.decay.min(out_meta.lead + phi.displacement().meta().lead);
    let tail = if rhs.tail().is_empty() {
        TailExpansion::zero()
    } else {
        let (s, _) = rhs.tail().helmholtz_preimage(out_meta.decay)?;
        s.split_above(copy).0
    };
    let t = sample_tail(&tail, &grid);
    let samples: Vec<f64> = z.iter().zip(&t).map(|(z, t)| z - t).collect();
    let meta = SpaceMeta { decay: copy, ..out_meta };
    Ok(AsymFunction::assemble(tail, Remainder::new(grid, samples, meta.decay)?, meta))
}

/// Nodal values of the `order`-th derivative (1 or 2), exact on the tail.
pub(crate) fn full_derivative(u: &AsymFunction, order: usize) -> Vec<f64> {
    let grid = *u.grid();
    let tail = u.tail().nth_derivative(order);
    let rem = match order {
        1 => d1(u.rem().samples(), grid.h),
        2 => d2(u.rem().samples(), grid.h),
        _ => panic!("unsupported derivative order {order}"),
    };
    let t = sample_tail(&tail, &grid);
    rem.iter().zip(&t).map(|(r, t)| r + t).collect()
}

/// Thomas algorithm for a tridiagonal system.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta.abs() < 1e-300 {
        return Err(Error::Singular { row: 0 });
    }
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta.abs() < 1e-300 || !beta.is_finite() {
            return Err(Error::Singular { row: i });
        }
        c[i] = upper[i] / beta;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}
