//! Run configuration, read from TOML.
//!
//! Every section and key is optional; omitted keys take the defaults listed
//! on each field. Unknown keys are rejected.

use anyhow::{bail, Context, Result};
use asymflow::diagnostics::CoeffWindow;
use asymflow::dynamics::{FieldPath, SolverConfig};
use asymflow::{AsymFunction, Flavor, Grid, Preset, SpaceMeta};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub equation: Equation,
    pub space: Space,
    pub grid: GridSection,
    pub time: Time,
    pub output: Output,
    /// Initial data; a table with a `preset` key. Default `zero`.
    pub initial: Initial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Equation {
    /// Family parameter; 2 is Camassa-Holm, 3 is Degasperis-Procesi. Default 2.
    pub b: f64,
    /// `"default"` or `"conjugated"`. Default `"default"`.
    pub path: FieldPath,
}

impl Default for Equation {
    fn default() -> Self {
        Equation { b: 2.0, path: FieldPath::Default }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Space {
    /// `"W"` (decaying remainder weights) or `"H"`. Default `"W"`.
    pub flavor: Flavor,
    /// Smallest tail index. Default 1.
    pub lead: u32,
    /// Largest tail index. Default 3.
    pub decay: u32,
    /// Derivatives controlled by the norm. Default 5.
    pub regularity: u32,
}

impl Default for Space {
    fn default() -> Self {
        Space { flavor: Flavor::W, lead: 1, decay: 3, regularity: 5 }
    }
}

impl Space {
    pub fn meta(&self) -> Result<SpaceMeta> {
        Ok(SpaceMeta::new(self.flavor, self.lead, self.decay, self.regularity)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// The grid covers `[-half_width, half_width]`. Default 40.
    pub half_width: f64,
    /// Node spacing. Default 0.05.
    pub h: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { half_width: 40.0, h: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Time {
    /// Step size. Default 0.01.
    pub dt: f64,
    /// Final time; must be a whole number of steps. Default 1.
    pub t_end: f64,
    /// Keep every `cadence`-th step. Default 10.
    pub cadence: usize,
    /// Steps must satisfy `dt <= stability_guard * h / max(1, sup|u0|)`. Default 0.5.
    pub stability_guard: f64,
}

impl Default for Time {
    fn default() -> Self {
        Time { dt: 0.01, t_end: 1.0, cadence: 10, stability_guard: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    /// Write `x,u` profiles for every snapshot. Default true.
    pub profiles: bool,
    /// Last tail index reported in the coefficient columns. Default: the
    /// space's `decay`.
    pub window_last: Option<u32>,
    /// Extra orders fitted alongside the window to absorb faster decay. Default 4.
    pub fit_extra: u32,
}

impl Default for Output {
    fn default() -> Self {
        Output { profiles: true, window_last: None, fit_extra: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Initial(pub Preset);

impl Default for Initial {
    fn default() -> Self {
        Initial(Preset::Zero)
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid.half_width, self.grid.h)?)
    }

    pub fn initial_data(&self) -> Result<AsymFunction> {
        let u0 = self.initial.0.build(self.grid()?, self.space.meta()?)?;
        Ok(u0)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.equation.b, self.time.dt, self.time.t_end, self.grid()?);
        cfg.path = self.equation.path;
        cfg.cadence = self.time.cadence;
        cfg.stability_guard = self.time.stability_guard;
        Ok(cfg)
    }

    pub fn window(&self) -> Result<CoeffWindow> {
        let last = self.output.window_last.unwrap_or(self.space.decay);
        if last < self.space.lead {
            bail!("window_last = {last} is below the leading index {}", self.space.lead);
        }
        Ok(CoeffWindow { lead: self.space.lead, last, extra: self.output.fit_extra })
    }

    /// Largest index whose coefficients the flow keeps fixed: `min(2 lead, decay)`.
    pub fn conserved_up_to(&self) -> u32 {
        (2 * self.space.lead).min(self.space.decay)
    }
}
