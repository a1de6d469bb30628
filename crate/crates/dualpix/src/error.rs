//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a mathematical precondition (nonpositive depth, focus
    /// behind the lens, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The weighted least-squares affine fit is singular (constant prediction
    /// under the confidence weights).
    #[error("singular affine fit: weighted variance of prediction is {variance:.3e}")]
    SingularFit { variance: f64 },

    #[error("degenerate percentiles: 1/3 and 2/3 points of the prediction coincide at {value}")]
    DegeneratePercentile { value: f64 },

    #[error("total confidence is zero")]
    ZeroConfidence,

    #[error("weighted rank variance is zero; correlation undefined")]
    UndefinedCorrelation,

    /// Equivalent-depth construction produced a nonpositive depth.
    #[error("ambiguity infeasible at pixel ({x}, {y}): equivalent depth {depth} is not positive")]
    AmbiguityInfeasible { x: usize, y: usize, depth: f64 },

    #[error("no pixel has a valid neighbor; view supervision undefined")]
    NoValidNeighbor,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    Train(String),

    #[error("empty dataset in {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
