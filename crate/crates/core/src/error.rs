use thiserror::Error;

/// Errors produced by the homogenization pipeline.
#[derive(Debug, Error)]
pub enum SlodError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    /// The patch of `center` covers the whole domain, so the space of
    /// harmonic functions on it is trivial.
    #[error("patch of element {center} coincides with the domain")]
    GlobalPatch { center: usize },

    /// Coarse system too ill-conditioned to be trusted.
    #[error("stability failure: {what} has condition number {condition:e} (limit {limit:e})")]
    Stability {
        what: &'static str,
        condition: f64,
        limit: f64,
        /// Largest selected singular value per group, for diagnostics.
        sigma: Vec<f64>,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SlodError {
    /// Short machine-readable tag used in CLI failure records.
    pub fn kind(&self) -> &'static str {
        match self {
            SlodError::Config(_) => "config",
            SlodError::Solver(_) => "solver",
            SlodError::Eigen(_) => "eigen",
            SlodError::GlobalPatch { .. } => "global_patch",
            SlodError::Stability { .. } => "stability",
            SlodError::Format(_) => "format",
            SlodError::Io(_) => "io",
            SlodError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, SlodError>;
