use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid-resolution: every axis needs at least 2 nodes, got {0}")]
    InvalidResolution(usize),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("density is not positive at node {node} (value {value})")]
    NonPositiveDensity { node: usize, value: f64 },

    #[error("infeasible field: max violation {max_violation:e}")]
    Infeasible { max_violation: f64 },

    #[error("shift {eps} exceeds the smallest aversion slope {min_q}; shifted field would leave the cone")]
    ShiftTooLarge { eps: f64, min_q: f64 },

    #[error("invalid-rectangle: {0}")]
    InvalidRectangle(String),

    #[error("instance too large for brute force: {nodes} nodes (limit {limit})")]
    TooLarge { nodes: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
