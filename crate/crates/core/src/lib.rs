//! Solver for the b-family of shallow water equations
//!
//! ```text
//!   m_t + u m_x + b m u_x = 0,    m = u - u_xx
//! ```
//!
//! on the real line, for data with polynomial decay or nonzero limits at
//! infinity. Functions are stored as an exact tail in the basis
//! `<x>^-k, x <x>^-(k+1)` plus a gridded remainder, and evolved in
//! Lagrangian variables `(phi, v = u o phi)`.

pub mod asymfun;
pub mod diagnostics;
pub mod diffeo;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod helmholtz;
pub mod io;
pub mod presets;
pub mod quadrature;
pub mod remainder;
pub mod spline;
pub mod tail;
pub mod verify;

pub use asymfun::{AsymFunction, Flavor, SpaceMeta};
pub use diffeo::AsymDiffeo;
pub use error::{Error, Result};
pub use grid::Grid;
pub use presets::Preset;
pub use remainder::Remainder;
pub use tail::{Basis, Kind, TailExpansion};
