use thiserror::Error;

pub type Result<T> = std::result::Result<T, EedError>;

#[derive(Debug, Error)]
pub enum EedError {
    #[error("invalid dimensions {width}x{height}: both sides must be at least 2")]
    InvalidDimensions { width: usize, height: usize },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("non-finite value at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty domain: {0}")]
    EmptyDomain(&'static str),

    #[error("no unknowns: every pixel is known")]
    NoUnknowns,

    #[error("singular system: unknown component containing pixel ({x}, {y}) has no known neighbour")]
    SingularSystem { x: usize, y: usize },

    #[error("initial iterate differs from the data at known pixel ({x}, {y})")]
    InadmissibleStart { x: usize, y: usize },

    #[error("conjugate gradients broke down at iteration {iteration} (curvature {curvature:e})")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("sparsification round {round} did not converge after retry")]
    SparsifyNotConverged { round: usize },

    #[error("reconstruction failed in sparsification round {round}: {reason}")]
    ReconstructionFailed { round: usize, reason: String },

    #[error("fixed-point iteration failed: {0}")]
    IterationFailed(String),

    #[error("malformed image file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
