use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum NhymError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix of size {size} is not positive definite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveDefinite { size: usize, eigenvalue: f64 },

    #[error("eigensolver failed to converge after {sweeps} sweeps (off-diagonal {off:.3e})")]
    EigenNoConvergence { sweeps: usize, off: f64 },

    #[error("singular matrix encountered (pivot {pivot:.3e})")]
    Singular { pivot: f64 },

    #[error("spectral gap collapsed: gap {gap:.3e} below threshold {min_gap:.3e} at node {node}")]
    GapCollapse { gap: f64, min_gap: f64, node: usize },

    #[error("invalid projector: {0}")]
    InvalidProjector(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl NhymError {
    /// Process exit code classification: malformed input is 1, anything
    /// failing mathematical validation is 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Json(_) | Self::Io(_) | Self::Snapshot(_) => 1,
            _ => 2,
        }
    }
}
