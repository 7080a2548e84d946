use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("Gram matrix at degree {degree} is numerically singular (scaled condition estimate {condition:.3e})")]
    Conditioning { degree: usize, condition: f64 },

    #[error("degree mismatch: space has degree {space}, request was for degree {requested}")]
    DegreeMismatch { space: usize, requested: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("envelope iteration did not converge after {iterations} sweeps (last update {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("solver quality: {0}")]
    SolverQuality(String),

    #[error("root finding failed: {0}")]
    Roots(String),

    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
