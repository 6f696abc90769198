//! Reference quadratures, conservation trackers and the convergence ladder.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::asymfun::{fit_coefficients, AsymFunction};
use crate::dynamics::{run, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{simpson, Grid};
use crate::quadrature::{integrate, integrate_half_line};
use crate::tail::Basis;

pub const ORACLE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scan {
    /// `int_0^inf g(x - z) e^-z dz`
    Plus,
    /// `int_0^inf g(x + z) e^-z dz`
    Minus,
}

/// Adaptive Gauss–Kronrod value of one exponential scan at `x`.
///
/// The integration variable runs over unit panels up to `|x| + 40`, so a
/// feature of the integrand far from `z = 0` cannot slip between the
/// sample points of one big interval; the rest of the half line is mapped.
pub fn oracle_q(g: impl Fn(f64) -> f64, x: f64, scan: Scan) -> Result<f64> {
    let s = match scan {
        Scan::Plus => -1.0,
        Scan::Minus => 1.0,
    };
    let f = |z: f64| g(x + s * z) * (-z).exp();
    let panels = (x.abs() + 40.0).ceil() as usize;
    let tol = ORACLE_TOL / (panels + 1) as f64;
    let mut total = 0.0;
    for j in 0..panels {
        total += integrate(f, j as f64, (j + 1) as f64, tol)?;
    }
    let end = panels as f64;
    Ok(total + integrate_half_line(|z| f(end + z), tol)?)
}

/// Coefficient window tracked per snapshot: indices `lead..=last`, fitted
/// with `extra` nuisance orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoeffWindow {
    pub lead: u32,
    pub last: u32,
    pub extra: u32,
}

impl CoeffWindow {
    pub fn basis(&self) -> Vec<Basis> {
        (self.lead..=self.last).flat_map(|k| [Basis::a(k), Basis::b(k)]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoeffRow {
    pub t: f64,
    /// Coefficients carried by the solver's tail bookkeeping.
    pub internal: Vec<(Basis, f64)>,
    /// Windowed fit of the raw Eulerian samples, or the reason it failed.
    pub fitted: std::result::Result<Vec<(Basis, f64)>, String>,
}

pub fn coefficients_of(u: &AsymFunction, t: f64, window: CoeffWindow) -> CoeffRow {
    let internal = window.basis().into_iter().map(|b| (b, u.tail().coeff_f64(b))).collect();
    let fitted = fit_coefficients(u.grid(), &u.values(), window.lead, window.last, window.extra)
        .map(|f| window.basis().into_iter().map(|b| (b, f.get(b))).collect())
        .map_err(|e| e.to_string());
    CoeffRow { t, internal, fitted }
}

pub fn track_coefficients(traj: &Trajectory, window: CoeffWindow) -> Vec<CoeffRow> {
    traj.snapshots.par_iter().map(|s| coefficients_of(&s.u, s.t, window)).collect()
}

/// Largest relative change of each fitted coefficient against the first
/// snapshot, scaled by `max(|c(0)|, scale)`.
pub fn fitted_drift(rows: &[CoeffRow], scale: f64) -> Result<Vec<(Basis, f64)>> {
    let first = rows.first().ok_or_else(|| Error::Invalid("no snapshots".into()))?;
    let c0 = first.fitted.as_ref().map_err(|e| Error::Invalid(e.clone()))?;
    let mut out: Vec<(Basis, f64)> = c0.iter().map(|(b, _)| (*b, 0.0)).collect();
    for row in rows {
        let c = row.fitted.as_ref().map_err(|e| Error::Invalid(format!("t = {}: {e}", row.t)))?;
        for ((o, (_, v)), (_, v0)) in out.iter_mut().zip(c).zip(c0) {
            o.1 = o.1.max((v - v0).abs() / v0.abs().max(scale));
        }
    }
    Ok(out)
}

/// `int (u^2 + u_x^2) dx`: Simpson on the grid plus adaptive quadrature of
/// the tail and far-field closure beyond it.
pub fn energy(u: &AsymFunction) -> Result<f64> {
    let grid = *u.grid();
    let du = u.derivative()?;
    let vals = u.values();
    let dvals = du.values();
    let density: Vec<f64> = vals.iter().zip(&dvals).map(|(a, b)| a * a + b * b).collect();
    let inside = simpson(&density, grid.h);
    let l = grid.half_width;
    let outer = |s: f64| {
        integrate_half_line(
            |z| {
                let x = s * (l + z);
                u.eval(x).powi(2) + du.eval(x).powi(2)
            },
            1e-14,
        )
    };
    Ok(inside + outer(1.0)? + outer(-1.0)?)
}

/// Energy at every snapshot; `None` unless `b = 2`.
pub fn track_energy(traj: &Trajectory, b: f64) -> Vec<(f64, Option<f64>)> {
    traj.snapshots
        .par_iter()
        .map(|s| (s.t, if b == 2.0 { energy(&s.u).ok() } else { None }))
        .collect()
}

/// Location of the maximum of nodal values, refined by the vertex of the
/// parabola through the three nodes around it.
pub fn crest(grid: &Grid, values: &[f64]) -> f64 {
    let (i, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) });
    if i == 0 || i + 1 == values.len() {
        return grid.x(i);
    }
    let (l, c, r) = (values[i - 1], values[i], values[i + 1]);
    let curv = l - 2.0 * c + r;
    let shift = if curv < 0.0 { 0.5 * (l - r) / curv } else { 0.0 };
    grid.x(i) + shift * grid.h
}

pub fn track_crest(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.snapshots.iter().map(|s| (s.t, crest(s.u.grid(), &s.u.values()))).collect()
}

/// Least-squares slope of `y` against `t`.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (st, sy) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = points
        .iter()
        .fold((0.0, 0.0), |(num, den), (t, y)| (num + (t - mt) * (y - my), den + (t - mt) * (t - mt)));
    num / den
}

/// Per-snapshot diagnostics in one table.
#[derive(Clone, Debug)]
pub struct Series {
    pub window: CoeffWindow,
    pub coefficients: Vec<CoeffRow>,
    pub energy: Vec<(f64, Option<f64>)>,
    pub crest: Vec<(f64, f64)>,
    pub phi_prime_min: Vec<f64>,
}

impl Series {
    pub fn collect(traj: &Trajectory, b: f64, window: CoeffWindow) -> Self {
        Series {
            window,
            coefficients: track_coefficients(traj, window),
            energy: track_energy(traj, b),
            crest: track_crest(traj),
            phi_prime_min: traj.snapshots.iter().map(|s| s.phi_prime_min).collect(),
        }
    }

    /// Columns `t, a_k.., b_k.., fitted_a_k.., fitted_b_k.., energy, crest_x,
    /// phi_prime_min`. Failed fits and absent energies are left empty.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let ks: Vec<u32> = (self.window.lead..=self.window.last).collect();
        let mut header = vec!["t".to_string()];
        for prefix in ["", "fitted_"] {
            header.extend(ks.iter().map(|k| format!("{prefix}a_{k}")));
            header.extend(ks.iter().map(|k| format!("{prefix}b_{k}")));
        }
        header.extend(["energy", "crest_x", "phi_prime_min"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for (j, row) in self.coefficients.iter().enumerate() {
            let mut rec = vec![row.t.to_string()];
            let pick = |c: &[(Basis, f64)], b: Basis| c.iter().find(|(x, _)| *x == b).map(|(_, v)| v.to_string());
            for k in &ks {
                rec.push(pick(&row.internal, Basis::a(*k)).unwrap_or_default());
            }
            for k in &ks {
                rec.push(pick(&row.internal, Basis::b(*k)).unwrap_or_default());
            }
            for kind in [Basis::a as fn(u32) -> Basis, Basis::b] {
                for k in &ks {
                    rec.push(row.fitted.as_ref().ok().and_then(|c| pick(c, kind(*k))).unwrap_or_default());
                }
            }
            rec.push(self.energy[j].1.map(|e| e.to_string()).unwrap_or_default());
            rec.push(self.crest[j].1.to_string());
            rec.push(self.phi_prime_min[j].to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// One rung of a convergence ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rung {
    pub dt: f64,
    pub h: f64,
    /// Sup distance to the next finer rung on the shared nodes.
    pub diff_to_next: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ladder {
    pub rungs: Vec<Rung>,
    /// `log2(d_j / d_{j+1})` for consecutive differences.
    pub orders: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub time: Ladder,
    pub space: Ladder,
}

/// Halving ladders in `dt` on the configured grid and in `h` at the finest
/// `dt`, comparing the Eulerian solution at `cfg.t_end`. `build` samples the
/// initial data on a given grid. Both ladders shrink `dt` and `h` by the same
/// factor overall, so the advective guard holds on every rung if it holds for
/// `cfg`.
pub fn convergence_harness<F>(cfg: &SolverConfig, build: F, levels: usize) -> Result<ConvergenceReport>
where
    F: Fn(Grid) -> Result<AsymFunction> + Sync,
{
    if levels < 3 {
        return Err(Error::Invalid(format!("need at least 3 levels, got {levels}")));
    }
    let finals = |cfgs: Vec<SolverConfig>| -> Result<Vec<AsymFunction>> {
        cfgs.par_iter()
            .map(|c| {
                let tr = run(c, build(c.grid)?)?;
                match tr.outcome {
                    crate::dynamics::Outcome::Completed => Ok(tr.last().u.clone()),
                    crate::dynamics::Outcome::Stopped { t, reason } => {
                        Err(Error::DiffeoLost { t, reason: format!("convergence rung stopped: {reason}") })
                    }
                }
            })
            .collect()
    };

    let time_cfgs: Vec<SolverConfig> = (0..levels)
        .map(|j| {
            let mut c = cfg.clone();
            c.dt = cfg.dt / (1 << j) as f64;
            c.cadence = usize::MAX;
            c
        })
        .collect();
    let time_sols = finals(time_cfgs.clone())?;
    let time_diffs: Vec<f64> = time_sols.windows(2).map(|w| sup_diff(&w[0].values(), &w[1].values(), 1)).collect();

    let mut space_cfgs = Vec::with_capacity(levels);
    for j in 0..levels {
        let mut c = cfg.clone();
        c.grid = Grid::new(cfg.grid.half_width, cfg.grid.h / (1 << j) as f64)?;
        c.dt = cfg.dt / (1 << (levels - 1)) as f64;
        c.cadence = usize::MAX;
        space_cfgs.push(c);
    }
    let space_sols = finals(space_cfgs.clone())?;
    let space_diffs: Vec<f64> = space_sols.windows(2).map(|w| sup_diff(&w[0].values(), &w[1].values(), 2)).collect();

    let ladder = |cfgs: &[SolverConfig], diffs: Vec<f64>| Ladder {
        rungs: cfgs
            .iter()
            .enumerate()
            .map(|(j, c)| Rung { dt: c.dt, h: c.grid.h, diff_to_next: diffs.get(j).copied() })
            .collect(),
        orders: diffs.windows(2).map(|d| (d[0] / d[1]).log2()).collect(),
    };
    Ok(ConvergenceReport { time: ladder(&time_cfgs, time_diffs), space: ladder(&space_cfgs, space_diffs) })
}

/// Sup of `coarse[i] - fine[stride * i]`.
fn sup_diff(coarse: &[f64], fine: &[f64], stride: usize) -> f64 {
    coarse.iter().enumerate().map(|(i, c)| (c - fine[stride * i]).abs()).fold(0.0, f64::max)
}
