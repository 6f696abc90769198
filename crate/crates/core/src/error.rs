use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tail expansion is empty")]
    EmptyTail,

    #[error("grids differ: (L={l1}, h={h1}) vs (L={l2}, h={h2})")]
    GridMismatch { l1: f64, h1: f64, l2: f64, h2: f64 },

    #[error("flavors differ")]
    FlavorMismatch,

    #[error("bad grid: {0}")]
    BadGrid(String),

    #[error("regularity {have} is below the required {need}")]
    Regularity { have: u32, need: u32 },

    #[error("remainder is not small at the grid edge: edge value {edge:.3e}, interior value {interior:.3e}")]
    BoundaryDecay { edge: f64, interior: f64 },

    #[error("non-finite sample at x = {x}")]
    NonFinite { x: f64 },

    #[error("no far-field closure for boundary mass {mass:.3e}")]
    MissingClosure { mass: f64 },

    #[error("not a diffeomorphism: 1 + u' = {value:.3e} at x = {x}")]
    NotADiffeomorphism { x: f64, value: f64 },

    #[error("diffeomorphism lost at t = {t}: {reason}")]
    DiffeoLost { t: f64, reason: String },

    #[error("composition leaves the evaluation domain: phi({edge}) = {image}")]
    OutOfDomain { edge: f64, image: f64 },

    #[error("root finding did not converge at x = {x}")]
    NoConvergence { x: f64 },

    #[error("singular tridiagonal system at row {row}")]
    Singular { row: usize },

    #[error("ill-conditioned fit: condition number {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("quadrature did not reach tolerance (estimate {estimate:.3e})")]
    Quadrature { estimate: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
