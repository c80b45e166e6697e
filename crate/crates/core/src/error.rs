use std::path::PathBuf;

/// Errors produced anywhere in the multiscale pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is numerically singular{}", pivot.map(|p| format!(" (pivot {p})")).unwrap_or_default())]
    Singular { pivot: Option<usize> },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigensolver failed on coarse element {element}: {reason}")]
    Eigen { element: usize, reason: String },

    #[error("local basis problem (element {element}, eigenfunction {eigen}, layers {layers}) failed: {source}")]
    LocalSolve {
        element: usize,
        eigen: usize,
        layers: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("coarse system is singular at this (H, m, l*): {0}")]
    CoarseSingular(Box<Error>),

    #[error("provenance mismatch: bases were built for {expected}, got {actual}")]
    Provenance { expected: String, actual: String },

    #[error("reference norm is zero, relative error undefined")]
    ZeroReference,

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short machine-readable kind, used as the status column of result files.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::DimensionMismatch { .. } => "dimension",
            Error::Singular { .. } => "singular",
            Error::Factorization(_) => "factorization",
            Error::Eigen { .. } => "eigen",
            Error::LocalSolve { .. } => "local_solve",
            Error::CoarseSingular(_) => "coarse_singular",
            Error::Provenance { .. } => "provenance",
            Error::ZeroReference => "zero_reference",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Whether the error reflects invalid input rather than a numerical
    /// breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_) | Error::Format { .. } | Error::Io(_))
    }
}
