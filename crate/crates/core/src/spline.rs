//! Interpolating quintic B-splines on uniform grids.
//!
//! Off-node evaluation must be smooth in the evaluation point: the solver
//! evaluates remainders at points that move with the flow, and a piecewise
//! interpolant whose stencil jumps between cells makes the vector field only
//! Lipschitz, which costs the time integrator its order. The spline is C^4,
//! exact at the nodes and sixth-order accurate.

use crate::grid::{fornberg, Grid};

/// Ghost nodes per side used for the end conditions.
const GHOSTS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct QuinticSpline {
    /// Coefficient of the B-spline centered on node `m` at index `m + 2`,
    /// for `m = -2..=n+1`.
    coeffs: Vec<f64>,
}

impl QuinticSpline {
    /// Interpolates `f` at the nodes. The four coefficients past the ends
    /// come from a local quasi-interpolant of the data extended by quintic
    /// extrapolation.
    pub fn new(f: &[f64]) -> Self {
        let n = f.len();
        assert!(n >= 6, "spline needs at least 6 nodes");
        // extended data: index j <-> node j - GHOSTS
        let mut ext = vec![0.0; n + 2 * GHOSTS];
        ext[GHOSTS..GHOSTS + n].copy_from_slice(f);
        let pts: Vec<f64> = (0..6).map(|j| j as f64).collect();
        for g in 1..=GHOSTS {
            let w = &fornberg(-(g as f64), &pts, 0)[0];
            ext[GHOSTS - g] = (0..6).map(|j| w[j] * f[j]).sum();
            ext[GHOSTS + n - 1 + g] = (0..6).map(|j| w[j] * f[n - 1 - j]).sum();
        }
        // c = f - d2 f / 4 + 13 d4 f / 240 matches the spline symbol through
        // fifth-degree terms
        let quasi = |m: isize| -> f64 {
            let j = (m + GHOSTS as isize) as usize;
            let d2 = ext[j + 1] - 2.0 * ext[j] + ext[j - 1];
            let d4 = ext[j + 2] - 4.0 * ext[j + 1] + 6.0 * ext[j] - 4.0 * ext[j - 1] + ext[j - 2];
            ext[j] - 0.25 * d2 + 13.0 / 240.0 * d4
        };
        let (lm2, lm1) = (quasi(-2), quasi(-1));
        let (rp0, rp1) = (quasi(n as isize), quasi(n as isize + 1));

        let mut rhs: Vec<f64> = f.iter().map(|v| 120.0 * v).collect();
        rhs[0] -= lm2 + 26.0 * lm1;
        rhs[1] -= lm1;
        rhs[n - 2] -= rp0;
        rhs[n - 1] -= 26.0 * rp0 + rp1;
        let inner = penta_solve(&rhs);

        let mut coeffs = Vec::with_capacity(n + 4);
        coeffs.extend([lm2, lm1]);
        coeffs.extend(inner);
        coeffs.extend([rp0, rp1]);
        QuinticSpline { coeffs }
    }

    /// Value and `x`-derivative at `x`. Caller keeps `x` within the grid up
    /// to rounding.
    #[inline]
    pub fn eval_with_deriv(&self, grid: &Grid, x: f64) -> (f64, f64) {
        let n = self.coeffs.len() - 4;
        let s = (x + grid.half_width) / grid.h;
        let cell = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
        let (b, db) = basis(s - cell as f64);
        let c = &self.coeffs[cell..cell + 6];
        let mut v = 0.0;
        let mut d = 0.0;
        for i in 0..6 {
            v += c[i] * b[i];
            d += c[i] * db[i];
        }
        (v, d / grid.h)
    }

    #[inline]
    pub fn eval(&self, grid: &Grid, x: f64) -> f64 {
        let n = self.coeffs.len() - 4;
        let s = (x + grid.half_width) / grid.h;
        let cell = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
        let b = values(s - cell as f64);
        let c = &self.coeffs[cell..cell + 6];
        c[0] * b[0] + c[1] * b[1] + c[2] * b[2] + c[3] * b[3] + c[4] * b[4] + c[5] * b[5]
    }
}

const K: f64 = 1.0 / 120.0;

/// Nonzero quintic B-splines on a unit cell at offset `t`.
#[inline]
fn values(t: f64) -> [f64; 6] {
    let u = 1.0 - t;
    let (t2, u2) = (t * t, u * u);
    [
        K * u2 * u2 * u,
        K * (26.0 + t * (-50.0 + t * (20.0 + t * (20.0 + t * (-20.0 + 5.0 * t))))),
        K * (66.0 + t2 * (-60.0 + t2 * (30.0 - 10.0 * t))),
        K * (26.0 + t * (50.0 + t * (20.0 + t * (-20.0 + t * (-20.0 + 10.0 * t))))),
        K * (1.0 + t * (5.0 + t * (10.0 + t * (10.0 + t * (5.0 - 5.0 * t))))),
        K * t2 * t2 * t,
    ]
}

/// Basis values and their `t`-derivatives.
#[inline]
fn basis(t: f64) -> ([f64; 6], [f64; 6]) {
    let u = 1.0 - t;
    let t2 = t * t;
    let (t4, u4) = (t2 * t2, u * u * u * u);
    let b = values(t);
    let db = [
        -5.0 * K * u4,
        K * (-50.0 + t * (40.0 + t * (60.0 + t * (-80.0 + 25.0 * t)))),
        K * t * (-120.0 + t2 * (120.0 - 50.0 * t)),
        K * (50.0 + t * (40.0 + t * (-60.0 + t * (-80.0 + 50.0 * t)))),
        K * (5.0 + t * (20.0 + t * (30.0 + t * (20.0 - 25.0 * t)))),
        5.0 * K * t4,
    ];
    (b, db)
}

/// Solves the banded system with rows `[1, 26, 66, 26, 1]` (truncated at
/// the ends) by elimination without pivoting; the matrix is strictly
/// diagonally dominant.
fn penta_solve(rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut a1 = 26.0;
        let mut d = 66.0;
        let mut e1 = if i + 1 < n { 26.0 } else { 0.0 };
        let e2 = if i + 2 < n { 1.0 } else { 0.0 };
        let mut r = rhs[i];
        if i >= 2 {
            a1 -= u1[i - 2];
            d -= u2[i - 2];
            r -= y[i - 2];
        }
        if i >= 1 {
            d -= a1 * u1[i - 1];
            e1 -= a1 * u2[i - 1];
            r -= a1 * y[i - 1];
        }
        u1[i] = e1 / d;
        u2[i] = e2 / d;
        y[i] = r / d;
    }
    let mut c = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        if i + 1 < n {
            v -= u1[i] * c[i + 1];
        }
        if i + 2 < n {
            v -= u2[i] * c[i + 2];
        }
        c[i] = v;
    }
    c
}
