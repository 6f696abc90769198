//! Functions with an exact asymptotic tail and a gridded remainder.
//!
//! An [`AsymFunction`] is `tail + remainder`, where the tail spans
//! `A(k), B(k)` for `lead <= k <= decay` and the remainder is `o(<x>^-decay)`.
//! The two remainder flavors differ in how derivatives are weighted:
//! [`Flavor::W`] gains one power of `<x>` per derivative, [`Flavor::H`] uses
//! the same weight throughout and admits tails with nonzero limits at
//! infinity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{d1, simpson, Grid};
use crate::remainder::Remainder;
use crate::tail::{exact_f64, Basis, NumericTail, TailExpansion};

pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-8;
/// Cap on the last tail index produced by products.
pub const DEFAULT_MAX_INDEX: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flavor {
    W,
    H,
}

/// Index bookkeeping for an asymptotic space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceMeta {
    pub flavor: Flavor,
    /// Smallest tail index allowed.
    pub lead: u32,
    /// Largest tail index; the remainder decays faster than `<x>^-decay`.
    pub decay: u32,
    /// Number of derivatives controlled by the norm.
    pub regularity: u32,
}

impl SpaceMeta {
    pub fn new(flavor: Flavor, lead: u32, decay: u32, regularity: u32) -> Result<Self> {
        if regularity < 1 {
            return Err(Error::Regularity { have: regularity, need: 1 });
        }
        Ok(SpaceMeta { flavor, lead, decay, regularity })
    }

    pub fn w(lead: u32, decay: u32, regularity: u32) -> Self {
        SpaceMeta { flavor: Flavor::W, lead, decay, regularity: regularity.max(1) }
    }

    pub fn h(lead: u32, decay: u32, regularity: u32) -> Self {
        SpaceMeta { flavor: Flavor::H, lead, decay, regularity: regularity.max(1) }
    }

    /// Whether the space admits any tail terms at all.
    pub fn has_tail(&self) -> bool {
        self.lead <= self.decay
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.flavor != other.flavor {
            return Err(Error::FlavorMismatch);
        }
        Ok(SpaceMeta {
            flavor: self.flavor,
            lead: self.lead.min(other.lead),
            decay: self.decay.min(other.decay),
            regularity: self.regularity.min(other.regularity),
        })
    }

    pub fn product(&self, other: &Self, max_index: u32) -> Result<Self> {
        if self.flavor != other.flavor {
            return Err(Error::FlavorMismatch);
        }
        let decay = (self.decay + other.lead).min(other.decay + self.lead).min(max_index);
        Ok(SpaceMeta {
            flavor: self.flavor,
            lead: self.lead + other.lead,
            decay,
            regularity: self.regularity.min(other.regularity),
        })
    }

    pub fn derivative(&self) -> Result<Self> {
        if self.regularity < 2 {
            return Err(Error::Regularity { have: self.regularity, need: 2 });
        }
        let decay = match self.flavor {
            Flavor::W => self.decay + 1,
            Flavor::H => self.decay,
        };
        Ok(SpaceMeta { lead: self.lead + 1, decay, regularity: self.regularity - 1, ..*self })
    }
}

/// Exact tail plus gridded remainder.
#[derive(Clone, Debug)]
pub struct AsymFunction {
    tail: TailExpansion,
    num: NumericTail,
    rem: Remainder,
    meta: SpaceMeta,
}

impl PartialEq for AsymFunction {
    fn eq(&self, other: &Self) -> bool {
        self.tail == other.tail && self.rem == other.rem && self.meta == other.meta
    }
}

impl AsymFunction {
    /// Checked constructor: tail indices must lie in `[lead, decay]`, the
    /// remainder must be finite and pass the boundary certificate.
    pub fn new(tail: TailExpansion, rem: Remainder, meta: SpaceMeta, boundary_tol: f64) -> Result<Self> {
        if let (Some(lo), Some(hi)) = (tail.min_index(), tail.max_index()) {
            if lo < meta.lead || hi > meta.decay {
                return Err(Error::Invalid(format!(
                    "tail indices {lo}..={hi} outside [{}, {}]",
                    meta.lead, meta.decay
                )));
            }
        }
        let rem = rem.with_decay(meta.decay);
        rem.certify(boundary_tol)?;
        Ok(AsymFunction { num: tail.numeric(), tail, rem, meta })
    }

    /// Builds a function from a tail that may overshoot `meta.decay`; excess
    /// terms are sampled into the remainder.
    pub fn assemble(tail: TailExpansion, mut rem: Remainder, meta: SpaceMeta) -> Self {
        let (keep, excess) = tail.split_above(meta.decay);
        if !excess.is_empty() {
            rem.add_samples(&sample_tail(&excess, rem.grid()));
        }
        let mut meta = meta;
        if let Some(lo) = keep.min_index() {
            debug_assert!(lo >= meta.lead, "tail index {lo} below lead {}", meta.lead);
            meta.lead = meta.lead.min(lo);
        }
        AsymFunction { num: keep.numeric(), tail: keep, rem: rem.with_decay(meta.decay), meta }
    }

    pub fn zero(grid: Grid, meta: SpaceMeta) -> Self {
        AsymFunction {
            tail: TailExpansion::zero(),
            num: NumericTail::default(),
            rem: Remainder::zeros(grid, meta.decay),
            meta,
        }
    }

    pub fn from_tail(tail: TailExpansion, grid: Grid, meta: SpaceMeta) -> Self {
        Self::assemble(tail, Remainder::zeros(grid, meta.decay), meta)
    }

    /// Tail plus a remainder sampled from `f`.
    pub fn from_fn(tail: TailExpansion, grid: Grid, meta: SpaceMeta, f: impl Fn(f64) -> f64) -> Self {
        Self::assemble(tail, Remainder::sampled(grid, meta.decay, f), meta)
    }

    /// Constant function (H flavor, lead 0).
    pub fn constant(c: f64, grid: Grid, decay: u32, regularity: u32) -> Self {
        Self::from_tail(TailExpansion::constant(exact_f64(c)), grid, SpaceMeta::h(0, decay, regularity))
    }

    pub fn tail(&self) -> &TailExpansion {
        &self.tail
    }

    pub fn numeric_tail(&self) -> &NumericTail {
        &self.num
    }

    pub fn rem(&self) -> &Remainder {
        &self.rem
    }

    pub fn meta(&self) -> SpaceMeta {
        self.meta
    }

    pub fn grid(&self) -> &Grid {
        self.rem.grid()
    }

    pub fn into_parts(self) -> (TailExpansion, Remainder, SpaceMeta) {
        (self.tail, self.rem, self.meta)
    }

    /// Relabels the space without touching values. Tail terms outside the
    /// new index range are demoted.
    pub fn relabel(self, meta: SpaceMeta) -> Self {
        Self::assemble(self.tail, self.rem, meta)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.num.eval(x) + self.rem.eval(x)
    }

    /// Full values `tail(x_i) + rem_i` at the grid nodes.
    pub fn values(&self) -> Vec<f64> {
        let mut v = sample_numeric(&self.num, self.grid());
        for (a, r) in v.iter_mut().zip(self.rem.samples()) {
            *a += r;
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.rem.all_finite()
    }

    pub fn certify(&self, boundary_tol: f64) -> Result<()> {
        self.rem.certify(boundary_tol)
    }

    /// `sum_j c_j u_j` over functions on one grid and flavor.
    pub fn lin_comb(terms: &[(f64, &AsymFunction)]) -> Result<Self> {
        let (_, first) = terms.first().ok_or_else(|| Error::Invalid("empty combination".into()))?;
        let grid = *first.grid();
        let mut meta = first.meta;
        for (_, u) in &terms[1..] {
            grid.check_same(u.grid())?;
            meta = meta.sum(&u.meta)?;
        }
        let mut tail = TailExpansion::zero();
        let mut samples = vec![0.0; grid.len()];
        for (c, u) in terms {
            if *c == 0.0 {
                continue;
            }
            tail = tail.add(&u.tail.scale(&exact_f64(*c)));
            for (s, r) in samples.iter_mut().zip(u.rem.samples()) {
                *s += c * r;
            }
        }
        Ok(Self::assemble(tail, Remainder::from_parts(grid, samples, meta.decay), meta))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::lin_comb(&[(1.0, self), (1.0, other)])
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::lin_comb(&[(1.0, self), (-1.0, other)])
    }

    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero(*self.grid(), self.meta);
        }
        let tail = self.tail.scale(&exact_f64(c));
        AsymFunction { num: tail.numeric(), tail, rem: self.rem.map(|_, v| c * v), meta: self.meta }
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        self.product_capped(other, DEFAULT_MAX_INDEX)
    }

    pub fn product_capped(&self, other: &Self, max_index: u32) -> Result<Self> {
        self.grid().check_same(other.grid())?;
        let meta = self.meta.product(&other.meta, max_index)?;
        let tail = self.tail.product(&other.tail);
        let t1 = sample_numeric(&self.num, self.grid());
        let t2 = sample_numeric(&other.num, self.grid());
        let r1 = self.rem.samples();
        let r2 = other.rem.samples();
        let samples: Vec<f64> =
            (0..t1.len()).map(|i| t1[i] * r2[i] + r1[i] * t2[i] + r1[i] * r2[i]).collect();
        Ok(Self::assemble(tail, Remainder::from_parts(*self.grid(), samples, meta.decay), meta))
    }

    pub fn derivative(&self) -> Result<Self> {
        let meta = self.meta.derivative()?;
        let tail = self.tail.derivative();
        let samples = d1(self.rem.samples(), self.grid().h);
        Ok(Self::assemble(tail, Remainder::from_parts(*self.grid(), samples, meta.decay), meta))
    }

    /// Asymptotic norm: `sum |a_k| + |b_k|` plus the weighted Sobolev norm of
    /// the remainder.
    pub fn norm(&self) -> f64 {
        self.tail.l1_norm() + self.rem_norm()
    }

    pub fn rem_norm(&self) -> f64 {
        let grid = *self.grid();
        let xs = grid.nodes();
        let mut f = self.rem.samples().to_vec();
        let mut total = 0.0;
        for j in 0..=self.meta.regularity {
            if j > 0 {
                f = d1(&f, grid.h);
            }
            let pow = match self.meta.flavor {
                Flavor::W => (self.meta.decay + j) as f64,
                Flavor::H => self.meta.decay as f64,
            };
            let integrand: Vec<f64> =
                xs.iter().zip(&f).map(|(x, v)| (1.0 + x * x).powf(pow) * v * v).collect();
            total += simpson(&integrand, grid.h);
        }
        total.sqrt()
    }

    /// Weighted sups of the remainder derivatives.
    pub fn decay_report(&self, boundary_tol: f64) -> DecayReport {
        let grid = *self.grid();
        let l = grid.half_width;
        let mut f = self.rem.samples().to_vec();
        let mut rows = Vec::new();
        for j in 0..self.meta.regularity {
            if j > 0 {
                f = d1(&f, grid.h);
            }
            let pow = match self.meta.flavor {
                Flavor::W => self.meta.decay as f64 + j as f64 + 0.5,
                Flavor::H => self.meta.decay as f64,
            };
            let mut row = DecayRow { order: j, sup: 0.0, at: 0.0, outer: 0.0 };
            for (i, v) in f.iter().enumerate() {
                let x = grid.x(i);
                let w = v.abs() * (1.0 + x * x).powf(0.5 * pow);
                if w > row.sup {
                    row.sup = w;
                    row.at = x;
                }
                if x.abs() > 0.5 * l {
                    row.outer = row.outer.max(w);
                }
            }
            rows.push(row);
        }
        let flagged = rows.iter().any(|r| r.outer > boundary_tol);
        DecayReport { rows, flagged }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub order: u32,
    pub sup: f64,
    pub at: f64,
    /// Largest weighted value with `|x| > L/2`.
    pub outer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub flagged: bool,
}

/// Tail values at every grid node.
pub fn sample_tail(tail: &TailExpansion, grid: &Grid) -> Vec<f64> {
    sample_numeric(&tail.numeric(), grid)
}

pub fn sample_numeric(nt: &NumericTail, grid: &Grid) -> Vec<f64> {
    if nt.is_empty() {
        return vec![0.0; grid.len()];
    }
    let r = grid.inv_bracket();
    let xs = grid.xs();
    xs.iter().zip(r.iter()).map(|(x, r)| nt.eval_with(*x, *r)).collect()
}

/// Result of a windowed least-squares fit of tail coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoeffFit {
    /// Fitted coefficients for `lead..=last`, as `(basis, value)`.
    pub coeffs: Vec<(Basis, f64)>,
    pub residual_rms: f64,
    pub condition: f64,
}

impl CoeffFit {
    pub fn get(&self, basis: Basis) -> f64 {
        self.coeffs.iter().find(|(b, _)| *b == basis).map(|(_, v)| *v).unwrap_or(0.0)
    }

    pub fn to_tail(&self) -> TailExpansion {
        let mut t = TailExpansion::zero();
        for (b, v) in &self.coeffs {
            t.add_term(*b, exact_f64(*v));
        }
        t
    }
}

const FIT_ROWS: usize = 4000;
pub const MAX_FIT_CONDITION: f64 = 1e12;

/// Fits `sum_{k=lead}^{last+extra} a_k A(k) + b_k B(k)` to full samples on
/// the window `L/2 <= |x| <= L`. The `extra` orders absorb faster-decaying
/// content and are not reported.
pub fn fit_coefficients(grid: &Grid, values: &[f64], lead: u32, last: u32, extra: u32) -> Result<CoeffFit> {
    if values.len() != grid.len() {
        return Err(Error::Invalid("sample count does not match grid".into()));
    }
    if lead > last {
        return Ok(CoeffFit { coeffs: vec![], residual_rms: 0.0, condition: 1.0 });
    }
    let l = grid.half_width;
    let window: Vec<usize> = (0..grid.len()).filter(|&i| grid.x(i).abs() >= 0.5 * l).collect();
    let stride = window.len().div_ceil(FIT_ROWS).max(1);
    let rows: Vec<usize> = window.into_iter().step_by(stride).collect();
    let mut basis = Vec::new();
    for k in lead..=last + extra {
        basis.push(Basis::a(k));
        basis.push(Basis::b(k));
    }
    if rows.len() < basis.len() {
        return Err(Error::Invalid("too few samples in the fit window".into()));
    }
    let mut a = DMatrix::from_fn(rows.len(), basis.len(), |r, c| basis[c].eval(grid.x(rows[r])));
    let mut scales = vec![0.0; basis.len()];
    for (c, s) in scales.iter_mut().enumerate() {
        *s = a.column(c).amax();
        if *s > 0.0 {
            a.column_mut(c).scale_mut(1.0 / *s);
        }
    }
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| values[i]));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_FIT_CONDITION {
        return Err(Error::IllConditioned { cond: condition });
    }
    let sol = svd.solve(&b, 0.0).map_err(|e| Error::Invalid(e.to_string()))?;
    let resid = &a * &sol - &b;
    let residual_rms = (resid.norm_squared() / rows.len() as f64).sqrt();
    let coeffs = basis
        .iter()
        .zip(sol.iter().zip(&scales))
        .filter(|(b, _)| b.k <= last)
        .map(|(b, (v, s))| (*b, v / s))
        .collect();
    Ok(CoeffFit { coeffs, residual_rms, condition })
}
