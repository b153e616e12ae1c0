use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mask has no exterior node, distance to the complement is undefined")]
    NoExterior,

    #[error("ellipticity violated ({predicate}) at node {node}, margin {margin:.3e}")]
    EllipticityViolation {
        node: usize,
        coords: Vec<f64>,
        direction: Vec<f64>,
        margin: f64,
        predicate: &'static str,
    },

    #[error("linear solver stalled after {iterations} iterations, relative residual {last:.3e}")]
    ConvergenceFailure {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("grid too coarse: {0}")]
    TooCoarse(String),

    #[error("kernel scale {s:.3e} below the resolvable minimum {min:.3e} (spacing {h:.3e})")]
    UnderResolved { s: f64, min: f64, h: f64 },

    #[error("insufficient domain margin: {0}")]
    DomainMargin(String),

    #[error("invalid Whitney input: {0}")]
    InvalidWhitney(String),

    /// `curve` holds (threshold, measure) samples of the level-set search.
    #[error("no stopping threshold in [1, 2^40] meets the measure budget")]
    StoppingFailure { curve: Vec<(f64, f64)> },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
