use thiserror::Error;

/// Errors raised by the library. Coordinates are reported as `f64`
/// regardless of the scalar type the caller works in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: lambda = {lambda}, eps = {eps} (need eps > 0, lambda >= 0)")]
    InvalidParams { lambda: f64, eps: f64 },

    #[error("non-finite input")]
    NotFinite,

    #[error("point ({x1}, {x2}) lies outside the parabolic strip of width eps^2 = {eps_sq}")]
    OutsideStrip { x1: f64, x2: f64, eps_sq: f64 },

    #[error("point ({x1}, {x2}) is within {margin} of a region boundary")]
    OnBoundary { x1: f64, x2: f64, margin: f64 },

    #[error("operation needs the large regime (lambda > 2 eps), got lambda / eps = {ratio}")]
    WrongRegime { ratio: f64 },

    #[error("invalid interval [{alpha}, {beta}]")]
    InvalidInterval { alpha: f64, beta: f64 },

    #[error("t = {t} is outside (0, 1) or sits on a segment breakpoint")]
    AtBreakpoint { t: f64 },

    #[error("no region with index {index} in this layout")]
    UnknownRegion { index: u8 },

    #[error("invalid piecewise function: {0}")]
    InvalidFunction(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
