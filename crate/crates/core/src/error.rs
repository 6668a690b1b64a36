use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The point lies outside the valid domain of the unified projection.
    #[error("point is behind the camera (projection denominator {denominator:e})")]
    BehindCamera { denominator: f64 },

    #[error("nearest-neighbour query on an empty frame")]
    EmptyFrame,

    #[error("non-positive time step {0} s")]
    DegenerateDt(f64),

    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("timestamps of track {id} are not strictly increasing at t = {t}")]
    NonMonotoneTimestamps { id: u64, t: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("vector norm {0:e} below the degeneracy threshold")]
    DegenerateVector(f64),

    #[error("only {got} matched pairs, need at least {needed}")]
    TooFewMatches { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("only {got} labels, need at least {needed}")]
    TooFewLabels { needed: usize, got: usize },

    #[error("prediction and ground-truth series do not overlap")]
    NoOverlap,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("target visible in {visible} of {total} samples")]
    TargetNeverVisible { visible: usize, total: usize },

    #[error("perturbation outside the small-perturbation regime: {0}")]
    OutOfRegime(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            kind => Error::Parse {
                line,
                message: format!("{kind:?}"),
            },
        }
    }
}
