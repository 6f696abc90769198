//! Gridded remainders and their far-field closure.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spline::QuinticSpline;

/// Number of inverse powers in the far-field closure.
pub const CLOSURE_TERMS: usize = 4;
/// Largest leading power tried for the closure.
const CLOSURE_MAX_SHIFT: i32 = 8;

/// Fraction of the grid (per side) used to fit the closure.
const CLOSURE_WINDOW: f64 = 0.1;
const CLOSURE_ROWS: usize = 160;

/// Extrapolation of a remainder beyond `[-L, L]` by
/// `sum_{j<4} c_j (L/|x|)^(p0 + j)`, fitted separately on each side. The
/// leading power `p0` is the one with the smallest misfit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FarField {
    pub left: [f64; CLOSURE_TERMS],
    pub right: [f64; CLOSURE_TERMS],
    /// Leading power `p0` on each side.
    pub powers: [i32; 2],
    half_width: f64,
    /// RMS misfit on each fitting window, relative to the window's max value.
    pub misfit: [f64; 2],
}

impl FarField {
    pub fn zero(half_width: f64) -> Self {
        FarField { half_width, powers: [1, 1], ..Default::default() }
    }

    pub fn fit(grid: &Grid, samples: &[f64]) -> Self {
        let n = samples.len();
        let span = ((n as f64) * CLOSURE_WINDOW / 2.0).ceil().max(CLOSURE_TERMS as f64 + 2.0) as usize;
        let span = span.min(n / 2);
        let left_idx: Vec<usize> = subsample(0, span, CLOSURE_ROWS);
        let right_idx: Vec<usize> = subsample(n - span, n, CLOSURE_ROWS);
        let (left, pl, ml) = best_side(grid, samples, &left_idx);
        let (right, pr, mr) = best_side(grid, samples, &right_idx);
        FarField { left, right, powers: [pl, pr], half_width: grid.half_width, misfit: [ml, mr] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (c, p0) = if x < 0.0 { (&self.left, self.powers[0]) } else { (&self.right, self.powers[1]) };
        let s = self.half_width / x.abs();
        let mut acc = 0.0;
        let mut p = s.powi(p0);
        for ck in c {
            acc += ck * p;
            p *= s;
        }
        acc
    }

    /// Whether the fit explains the edge data well enough to extrapolate.
    pub fn trustworthy(&self) -> bool {
        self.misfit.iter().all(|m| *m <= 1e-4)
    }
}

fn subsample(lo: usize, hi: usize, rows: usize) -> Vec<usize> {
    let count = hi - lo;
    if count <= rows {
        return (lo..hi).collect();
    }
    (0..rows).map(|j| lo + j * (count - 1) / (rows - 1)).collect()
}

fn best_side(grid: &Grid, samples: &[f64], idx: &[usize]) -> ([f64; CLOSURE_TERMS], i32, f64) {
    let mut best = ([0.0; CLOSURE_TERMS], 1, f64::INFINITY);
    for p0 in 1..=CLOSURE_MAX_SHIFT {
        let (c, m) = fit_side(grid, samples, idx, p0);
        if m < best.2 {
            best = (c, p0, m);
        }
        if m == 0.0 {
            break;
        }
    }
    best
}

fn fit_side(grid: &Grid, samples: &[f64], idx: &[usize], p0: i32) -> ([f64; CLOSURE_TERMS], f64) {
    let mut out = [0.0; CLOSURE_TERMS];
    let peak = idx.iter().map(|&i| samples[i].abs()).fold(0.0, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return (out, 0.0);
    }
    let a = DMatrix::from_fn(idx.len(), CLOSURE_TERMS, |r, c| {
        let s = grid.half_width / grid.x(idx[r]).abs();
        s.powi(c as i32 + p0)
    });
    let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| samples[i] / peak));
    let svd = a.clone().svd(true, true);
    let Ok(sol) = svd.solve(&b, 1e-13) else {
        return (out, f64::INFINITY);
    };
    let resid = &a * &sol - &b;
    let misfit = (resid.norm_squared() / idx.len() as f64).sqrt();
    for (o, v) in out.iter_mut().zip(sol.iter()) {
        *o = v * peak;
    }
    (out, misfit)
}

/// Samples of a function on a uniform grid together with the decay order it
/// claims beyond the grid.
#[derive(Clone, Debug)]
pub struct Remainder {
    grid: Grid,
    samples: Vec<f64>,
    decay: u32,
    far: OnceLock<FarField>,
    spline: OnceLock<QuinticSpline>,
}

impl Remainder {
    pub fn new(grid: Grid, samples: Vec<f64>, decay: u32) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::BadGrid(format!(
                "{} samples for a grid of {} nodes",
                samples.len(),
                grid.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { x: grid.x(i) });
        }
        Ok(Self::from_parts(grid, samples, decay))
    }

    /// Unchecked constructor for internal use where finiteness is tracked
    /// separately.
    pub(crate) fn from_parts(grid: Grid, samples: Vec<f64>, decay: u32) -> Self {
        debug_assert_eq!(samples.len(), grid.len());
        Remainder { grid, samples, decay, far: OnceLock::new(), spline: OnceLock::new() }
    }

    pub fn zeros(grid: Grid, decay: u32) -> Self {
        let far = OnceLock::new();
        let _ = far.set(FarField::zero(grid.half_width));
        Remainder { grid, samples: vec![0.0; grid.len()], decay, far, spline: OnceLock::new() }
    }

    pub fn sampled(grid: Grid, decay: u32, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(grid, grid.sample(f), decay)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn decay(&self) -> u32 {
        self.decay
    }

    pub fn with_decay(mut self, decay: u32) -> Self {
        self.decay = decay;
        self
    }

    pub fn far(&self) -> &FarField {
        self.far.get_or_init(|| FarField::fit(&self.grid, &self.samples))
    }

    pub fn spline(&self) -> &QuinticSpline {
        self.spline.get_or_init(|| QuinticSpline::new(&self.samples))
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|v| *v == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    /// Spline value inside the grid, far-field closure outside.
    pub fn eval(&self, x: f64) -> f64 {
        let l = self.grid.half_width;
        if x.abs() <= l {
            self.spline().eval(&self.grid, x)
        } else {
            self.far().eval(x)
        }
    }

    pub fn sup(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let samples = self.samples.iter().enumerate().map(|(i, v)| f(self.grid.x(i), *v)).collect();
        Self::from_parts(self.grid, samples, self.decay)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self::from_parts(self.grid, samples, self.decay.min(other.decay)))
    }

    /// Adds nodal values to the samples.
    pub fn add_samples(&mut self, extra: &[f64]) {
        for (v, e) in self.samples.iter_mut().zip(extra) {
            *v += e;
        }
        self.far = OnceLock::new();
        self.spline = OnceLock::new();
    }

    /// Weighted sup `|f| <x>^decay` over the outer 5% of nodes on each side
    /// and over the reference band `L/4 <= |x| <= L/2`.
    pub fn edge_profile(&self) -> (f64, f64) {
        let l = self.grid.half_width;
        let w = |x: f64| (1.0 + x * x).powf(0.5 * self.decay as f64);
        let mut edge: f64 = 0.0;
        let mut band: f64 = 0.0;
        for (i, v) in self.samples.iter().enumerate() {
            let x = self.grid.x(i);
            let a = x.abs();
            if a >= 0.95 * l {
                edge = edge.max(v.abs() * w(x));
            } else if (0.25 * l..=0.5 * l).contains(&a) {
                band = band.max(v.abs() * w(x));
            }
        }
        (edge, band)
    }

    /// Boundary smallness certificate.
    ///
    /// Passes when the weighted edge value is below `tol`, or when it is at
    /// most half the weighted value on the reference band (the weighted
    /// profile is still decaying at the edge).
    pub fn certify(&self, tol: f64) -> Result<()> {
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { x: self.grid.x(i) });
        }
        let (edge, band) = self.edge_profile();
        if edge <= tol || edge <= 0.5 * band {
            Ok(())
        } else {
            Err(Error::BoundaryDecay { edge, interior: band })
        }
    }
}

impl PartialEq for Remainder {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.decay == other.decay && self.samples == other.samples
    }
}
