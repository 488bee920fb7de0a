use thiserror::Error;

/// Errors produced by the experiment-design toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Validation(String),

    #[error("invalid geometry: {field} must be positive and finite, got {value}")]
    InvalidGeometry { field: &'static str, value: f64 },

    #[error("index {index} out of range for factor {factor} with {levels} levels")]
    IndexOutOfRange {
        factor: usize,
        index: usize,
        levels: usize,
    },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("missing coverage: factor {factor} ('{name}') has no observation at level {level}")]
    MissingCoverage {
        factor: usize,
        name: String,
        level: usize,
    },

    #[error("kernel matrix is ill-conditioned even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("feature {feature} is constant and cannot be standardized")]
    ConstantFeature { feature: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("unknown surface '{0}'")]
    UnknownSurface(String),

    #[error("unsupported schema_version {found}; supported versions: {supported}")]
    SchemaVersion { found: u32, supported: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable code, used for `code: message` lines and API envelopes.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::InvalidGeometry { .. } => "invalid geometry",
            Error::IndexOutOfRange { .. } => "index out of range",
            Error::Infeasible(_) => "infeasible",
            Error::Unsupported(_) => "unsupported",
            Error::MissingCoverage { .. } => "missing coverage",
            Error::IllConditioned { .. } => "ill-conditioned",
            Error::ConstantFeature { .. } => "constant feature",
            Error::DimensionMismatch { .. } => "dimension mismatch",
            Error::Conflict(_) => "conflict",
            Error::NotReady(_) => "not ready",
            Error::UnknownSurface(_) => "unknown surface",
            Error::SchemaVersion { .. } => "schema version",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
