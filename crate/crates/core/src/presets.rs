//! Built-in initial data.

use serde::{Deserialize, Serialize};

use crate::asymfun::{AsymFunction, Flavor, SpaceMeta, DEFAULT_BOUNDARY_TOL};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::remainder::Remainder;
use crate::tail::{exact_f64, Basis, TailExpansion};

/// Initial data by name. Every preset is built in a caller-supplied space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    Zero,
    /// `amplitude * exp(-((x - center)/width)^2)`, no tail.
    Gaussian {
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `sum a_k A(k) + b_k B(k)` for `k = lead, lead+1, ...` plus a Gaussian bump.
    RationalTail {
        #[serde(default)]
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<f64>,
        #[serde(default)]
        bump: f64,
    },
    /// Peakon `c exp(-|x|)` convolved with a unit-mass Gaussian of standard
    /// deviation `sigma`. Its momentum `u - u''` is `2c` times that Gaussian.
    SmoothedPeakon { speed: f64, sigma: f64 },
    /// Limits `c0+` at `+inf` and `c0-` at `-inf`, plus an optional Gaussian bump.
    ConstantBackground {
        plus: f64,
        minus: f64,
        #[serde(default)]
        bump: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Name and one-line description of every preset.
pub const CATALOG: &[(&str, &str)] = &[
    ("zero", "u0 = 0"),
    ("gaussian", "amplitude * exp(-((x - center)/width)^2); any flavor, empty tail"),
    ("rational_tail", "sum a_k <x>^-k + b_k x<x>^-k-1 from the leading index, plus bump * exp(-x^2)"),
    ("smoothed_peakon", "speed * exp(-|x|) mollified by a Gaussian of width sigma"),
    ("constant_background", "H flavor: limits plus/minus at +-inf joined smoothly, plus bump * exp(-x^2)"),
];

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Zero => "zero",
            Preset::Gaussian { .. } => "gaussian",
            Preset::RationalTail { .. } => "rational_tail",
            Preset::SmoothedPeakon { .. } => "smoothed_peakon",
            Preset::ConstantBackground { .. } => "constant_background",
        }
    }

    /// Samples the preset in `meta`; the result passes the boundary check.
    pub fn build(&self, grid: Grid, meta: SpaceMeta) -> Result<AsymFunction> {
        let (tail, f): (TailExpansion, Box<dyn Fn(f64) -> f64>) = match *self {
            Preset::Zero => (TailExpansion::zero(), Box::new(|_| 0.0)),
            Preset::Gaussian { amplitude, width, center } => {
                if !(width > 0.0) {
                    return Err(Error::Invalid(format!("gaussian width must be positive, got {width}")));
                }
                (TailExpansion::zero(), Box::new(move |x| amplitude * (-((x - center) / width).powi(2)).exp()))
            }
            Preset::RationalTail { ref a, ref b, bump } => {
                (rational_tail(meta, a, b)?, Box::new(move |x| bump * (-x * x).exp()))
            }
            Preset::SmoothedPeakon { speed, sigma } => {
                if !(sigma > 0.0) {
                    return Err(Error::Invalid(format!("peakon smoothing must be positive, got {sigma}")));
                }
                (TailExpansion::zero(), Box::new(move |x| speed * mollified_peakon(x, sigma)))
            }
            Preset::ConstantBackground { plus, minus, bump } => {
                if meta.flavor != Flavor::H || meta.lead != 0 {
                    return Err(Error::Invalid("constant_background needs H flavor with leading index 0".into()));
                }
                (constant_background(plus, minus, meta.decay)?, Box::new(move |x| bump * (-x * x).exp()))
            }
        };
        let rem = Remainder::sampled(grid, meta.decay, f);
        AsymFunction::new(tail, rem, meta, DEFAULT_BOUNDARY_TOL)
    }
}

fn rational_tail(meta: SpaceMeta, a: &[f64], b: &[f64]) -> Result<TailExpansion> {
    let count = a.len().max(b.len()) as u32;
    if count > 0 && meta.lead + count - 1 > meta.decay {
        return Err(Error::Invalid(format!(
            "{count} coefficients starting at index {} overrun the last tail index {}",
            meta.lead, meta.decay
        )));
    }
    let mut tail = TailExpansion::zero();
    for (j, c) in a.iter().enumerate() {
        tail.add_term(Basis::a(meta.lead + j as u32), exact_f64(*c));
    }
    for (j, c) in b.iter().enumerate() {
        tail.add_term(Basis::b(meta.lead + j as u32), exact_f64(*c));
    }
    Ok(tail)
}

/// `(exp(-|.|) * G_sigma)(x)` in closed form.
pub fn mollified_peakon(x: f64, sigma: f64) -> f64 {
    let s2 = sigma * std::f64::consts::SQRT_2;
    let a = sigma * sigma;
    let right = (-x).exp() * libm::erfc((a - x) / s2);
    let left = if x.abs() < 700.0 { x.exp() * libm::erfc((a + x) / s2) } else { 0.0 };
    0.5 * (0.5 * a).exp() * (right + if left.is_finite() { left } else { 0.0 })
}

/// Tail with the given limits at `+-inf` and no further terms in the
/// `1/x^k` expansions up to `order`.
pub fn constant_background(plus: f64, minus: f64, order: u32) -> Result<TailExpansion> {
    let mut p = vec![exact_f64(0.0); order as usize + 1];
    let mut m = p.clone();
    p[0] = exact_f64(plus);
    m[0] = exact_f64(minus);
    TailExpansion::from_c_coeffs(&p, &m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_has_requested_limits() {
        let t = constant_background(0.3, -0.2, 1).unwrap();
        assert!((t.coeff_f64(Basis::a(0)) - 0.05).abs() < 1e-15);
        assert!((t.coeff_f64(Basis::b(0)) - 0.25).abs() < 1e-15);
        assert!((t.eval(1e8) - 0.3).abs() < 1e-12);
        assert!((t.eval(-1e8) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn peakon_crest_is_at_origin() {
        let g = Grid::new(20.0, 0.01).unwrap();
        let u = Preset::SmoothedPeakon { speed: 1.0, sigma: 0.1 }.build(g, SpaceMeta::w(1, 3, 4)).unwrap();
        // exp(s^2/2) erfc(s/sqrt 2) at s = 0.1
        assert!((u.eval(0.0) - 0.924_957_570_575_071_1).abs() < 1e-12);
        assert!(u.eval(0.5) < u.eval(0.0));
        assert!((u.eval(6.0) - (0.005f64).exp() * (-6.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rational_tail_rejects_overflowing_coefficients() {
        let g = Grid::new(20.0, 0.1).unwrap();
        let p = Preset::RationalTail { a: vec![1.0, 0.0, 0.0, 1.0], b: vec![], bump: 0.0 };
        assert!(p.build(g, SpaceMeta::w(1, 3, 4)).is_err());
    }
}
