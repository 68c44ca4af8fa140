//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamps must strictly increase (got {earlier} then {later})")]
    DegenerateTimestamp { earlier: f64, later: f64 },

    #[error("mass must be nonzero to recover the center of mass")]
    DegenerateMass,

    #[error("prior parameters project to a singular pseudo-inertia")]
    SingularPrior,

    #[error("force magnitude {0} is too small to define a direction")]
    DegenerateForce(f64),

    #[error("force does not press into the surface (f\u{0302}\u{00b7}s_n = {0})")]
    NonPressingForce(f64),

    #[error("dataset must contain at least 3 timesteps, got {0}")]
    DatasetTooShort(usize),

    #[error("convex hull is unbounded or degenerate: {0}")]
    BadHull(String),

    #[error("inertia is singular (at least two principal second moments are zero)")]
    SingularInertia,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data in {context}: {message}")]
    BadData { context: String, message: String },

    #[error("filter window must be odd, larger than the order, and no longer than the signal \
             (window {window}, order {order}, signal {len})")]
    BadFilterWindow {
        window: usize,
        order: usize,
        len: usize,
    },

    #[error("solver produced a non-finite residual; input data is unusable")]
    NonFiniteResidual,

    #[error("local delta has dimension {got}, variable expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse {context}: {message}")]
    Parse { context: String, message: String },
}

/// Exit classification for the command-line tools: usage errors exit 1,
/// data errors exit 2.
impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::DatasetTooShort(_)
            | Error::BadFilterWindow { .. }
            | Error::DimensionMismatch { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
