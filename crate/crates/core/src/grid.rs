//! Uniform grids on `[-L, L]` and the stencil arithmetic used on them.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type GridCache = RefCell<HashMap<(u64, u64), Rc<Vec<f64>>>>;

/// Uniform grid `x_i = -L + i h`, `i = 0..=2L/h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(rename = "L")]
    pub half_width: f64,
    pub h: f64,
}

impl Grid {
    pub fn new(half_width: f64, h: f64) -> Result<Self> {
        if !(half_width > 0.0 && h > 0.0 && half_width.is_finite()) {
            return Err(Error::BadGrid(format!("need L > 0 and h > 0, got L={half_width}, h={h}")));
        }
        let cells = 2.0 * half_width / h;
        if (cells - cells.round()).abs() > 1e-8 * cells.max(1.0) {
            return Err(Error::BadGrid(format!("2L/h = {cells} is not an integer")));
        }
        if cells.round() < 8.0 {
            return Err(Error::BadGrid(format!("only {cells} cells")));
        }
        Ok(Grid { half_width, h })
    }

    pub fn cells(&self) -> usize {
        (2.0 * self.half_width / self.h).round() as usize
    }

    pub fn len(&self) -> usize {
        self.cells() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        // symmetric formula keeps x_{n-1-i} = -x_i exactly
        let n = self.cells();
        if 2 * i <= n {
            -self.half_width + i as f64 * self.h
        } else {
            self.half_width - (n - i) as f64 * self.h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.x(i))).collect()
    }

    /// `1/<x_i>` at every node, cached per thread and grid.
    pub fn inv_bracket(&self) -> Rc<Vec<f64>> {
        thread_local!(static CACHE: GridCache = RefCell::new(HashMap::new()));
        CACHE.with(|c| self.cached(c, |x| 1.0 / (1.0 + x * x).sqrt()))
    }

    /// Node coordinates, cached per thread and grid.
    pub fn xs(&self) -> Rc<Vec<f64>> {
        thread_local!(static CACHE: GridCache = RefCell::new(HashMap::new()));
        CACHE.with(|c| self.cached(c, |x| x))
    }

    fn cached(&self, cache: &GridCache, f: impl Fn(f64) -> f64) -> Rc<Vec<f64>> {
        let key = (self.half_width.to_bits(), self.h.to_bits());
        cache.borrow_mut().entry(key).or_insert_with(|| Rc::new(self.sample(f))).clone()
    }

    pub fn contains(&self, x: f64) -> bool {
        x.abs() <= self.half_width
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        (self.half_width - other.half_width).abs() <= 1e-12 * self.half_width
            && (self.h - other.h).abs() <= 1e-12 * self.h
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                l1: self.half_width,
                h1: self.h,
                l2: other.half_width,
                h2: other.h,
            })
        }
    }
}

/// Finite-difference weights (Fornberg's recursion) for derivatives
/// `0..=max_deriv` at `z` from values at `xs`. Row `d` holds the weights of
/// the `d`-th derivative.
pub fn fornberg(z: f64, xs: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Derivative stencil set for a uniform grid: a centered interior stencil
/// and one-sided stencils for the nodes too close to either end.
#[derive(Clone, Debug)]
pub struct Stencil {
    deriv: usize,
    half: usize,
    center: Vec<f64>,
    // left[i]: weights over nodes 0..width for node i
    left: Vec<Vec<f64>>,
    width: usize,
}

impl Stencil {
    /// `deriv`-th derivative with formal accuracy `order` (even).
    pub fn new(deriv: usize, order: usize) -> Self {
        let half = (order + deriv - 1) / 2;
        let offsets: Vec<f64> = (0..=2 * half).map(|j| j as f64 - half as f64).collect();
        let center = fornberg(0.0, &offsets, deriv)[deriv].clone();
        let width = order + deriv;
        let pts: Vec<f64> = (0..width).map(|j| j as f64).collect();
        let left = (0..half).map(|i| fornberg(i as f64, &pts, deriv)[deriv].clone()).collect();
        Stencil { deriv, half, center, left, width }
    }

    pub fn apply(&self, f: &[f64], h: f64) -> Vec<f64> {
        let n = f.len();
        assert!(n >= self.width.max(2 * self.half + 1), "grid too short for stencil");
        let scale = 1.0 / h.powi(self.deriv as i32);
        let sign = if self.deriv % 2 == 1 { -1.0 } else { 1.0 };
        let mut out = vec![0.0; n];
        for i in self.half..n - self.half {
            let window = &f[i - self.half..=i + self.half];
            out[i] = dot(&self.center, window) * scale;
        }
        for (i, w) in self.left.iter().enumerate() {
            out[i] = dot(w, &f[..self.width]) * scale;
            // mirror: reversed nodes flip odd derivatives
            let acc: f64 = w.iter().enumerate().map(|(j, wj)| wj * f[n - 1 - j]).sum();
            out[n - 1 - i] = sign * acc * scale;
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fourth-order first derivative (5-point stencils).
pub fn d1(f: &[f64], h: f64) -> Vec<f64> {
    thread_local!(static S: Stencil = Stencil::new(1, 4));
    S.with(|s| s.apply(f, h))
}

/// Fourth-order second derivative.
pub fn d2(f: &[f64], h: f64) -> Vec<f64> {
    thread_local!(static S: Stencil = Stencil::new(2, 4));
    S.with(|s| s.apply(f, h))
}

/// Eighth-order second derivative (9-point centered, 10-point one-sided).
pub fn d2_eighth(f: &[f64], h: f64) -> Vec<f64> {
    thread_local!(static S: Stencil = Stencil::new(2, 8));
    S.with(|s| s.apply(f, h))
}

// Lagrange denominators for nodes 0..6: prod_{m != k} (k - m)
const LAGRANGE6_DEN: [f64; 6] = [-120.0, 24.0, -12.0, 12.0, -24.0, 120.0];

/// Six-point Lagrange interpolation of grid samples at `x`. The stencil is
/// centered on the containing cell and shifted inward near the ends. Caller
/// guarantees `|x| <= L` (up to rounding).
pub fn interp6(f: &[f64], grid: &Grid, x: f64) -> f64 {
    let n = f.len();
    let s = (x + grid.half_width) / grid.h;
    let cell = (s.floor() as isize).clamp(0, n as isize - 2);
    let start = (cell - 2).clamp(0, n as isize - 6) as usize;
    let t = s - start as f64;
    let mut pre = [1.0; 6];
    let mut suf = [1.0; 6];
    for k in 1..6 {
        pre[k] = pre[k - 1] * (t - (k - 1) as f64);
    }
    for k in (0..5).rev() {
        suf[k] = suf[k + 1] * (t - (k + 1) as f64);
    }
    let mut acc = 0.0;
    for k in 0..6 {
        acc += f[start + k] * pre[k] * suf[k] / LAGRANGE6_DEN[k];
    }
    acc
}

/// Composite Simpson rule on uniform samples (3/8 rule on the last three
/// cells when the cell count is odd).
pub fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (f[0] + f[1]),
        3 => h / 3.0 * (f[0] + 4.0 * f[1] + f[2]),
        4 => 3.0 * h / 8.0 * (f[0] + 3.0 * f[1] + 3.0 * f[2] + f[3]),
        _ => {
            let cells = n - 1;
            let (even_end, tail) = if cells % 2 == 0 { (n - 1, false) } else { (n - 4, true) };
            let mut acc = f[0] + f[even_end];
            for (i, v) in f.iter().enumerate().take(even_end).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = acc * h / 3.0;
            if tail {
                let j = n - 4;
                total += 3.0 * h / 8.0 * (f[j] + 3.0 * f[j + 1] + 3.0 * f[j + 2] + f[j + 3]);
            }
            total
        }
    }
}
