use thiserror::Error;

/// Errors produced by the diagnostics library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("point ({x}, {y}) lies outside the observation region")]
    OutsideRegion { x: f64, y: f64 },

    #[error("observation region has no active pixels")]
    EmptyRegion,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "infimum of the intensity is zero, exact thinning would retain nothing; \
         use approximate thinning with an expected retained count instead"
    )]
    DegenerateInfimum,

    #[error("intensity is zero at {} event(s) (indices {indices:?})", indices.len())]
    ZeroIntensity { indices: Vec<usize> },

    #[error("at least {needed} points are required, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("grids are incompatible: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
