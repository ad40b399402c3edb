use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("t = {t} lies outside the integrated envelope interval [{lo}, {hi}]")]
    OutsideInterval { t: f64, lo: f64, hi: f64 },

    #[error("caustic at t = {t}: {factor} vanishes inside the requested window")]
    Caustic { t: f64, factor: &'static str },

    #[error("transformation function vanishes at (x, t) = ({x}, {t})")]
    Node { x: f64, t: f64 },

    #[error("Im(log u)_xx is not x-independent at t = {t} (spread {spread:e})")]
    XDependence { t: f64, spread: f64 },

    #[error("second transformation function lies in the kernel of the first transform")]
    Coincident,

    #[error("unsupported for this family: {0}")]
    Unsupported(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("wavepacket reached the boundary at t = {t} (|psi| = {value:e})")]
    BoundaryReached { t: f64, value: f64 },

    #[error("linear solver breakdown at step {step}")]
    SolverBreakdown { step: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("evaluation failed at (x, t) = ({x}, {t}): {source}")]
    At {
        x: f64,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Attach grid coordinates to an evaluation error.
    pub fn at(self, x: f64, t: f64) -> Error {
        match self {
            Error::At { .. } => self,
            other => Error::At {
                x,
                t,
                source: Box::new(other),
            },
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidModel(_) | Error::InvalidGrid(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
