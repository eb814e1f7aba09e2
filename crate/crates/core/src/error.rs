use num_complex::Complex64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("matching system is singular at z = {z} (relative residual {residual:.3e})")]
    Singular { z: Complex64, residual: f64 },

    #[error("{what} did not converge after {iterations} iterations (last z = {last}, residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        last: Complex64,
        residual: f64,
    },

    #[error("contour sampling insufficient: {0}")]
    Sampling(String),

    #[error("point ({x}, {y}) lies outside the channel")]
    OutsideChannel { x: f64, y: f64 },

    #[error("trajectory matching ambiguous near d = {d} after {halvings} step halvings")]
    AmbiguousHandoff { d: f64, halvings: usize },

    #[error("no bound state found; nearest approach gamma = {gamma:.3e} at d = {d}")]
    NoBic { d: f64, gamma: f64 },

    #[error("{0}")]
    Incomplete(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
