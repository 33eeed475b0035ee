//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    /// Malformed file contents (bad magic, truncated payload, non-finite data).
    #[error("{0}")]
    Format(String),
    /// Valid file, but a variant this crate does not handle.
    #[error("{0}")]
    Unsupported(String),
    #[error("{0}")]
    Dimensionality(String),
    /// Mismatched or invalid volume geometry between operands.
    #[error("{0}")]
    Geometry(String),
    #[error("{0}")]
    Argument(String),
    /// Similarity metric undefined (constant intensities over the domain).
    #[error("{0}")]
    DegenerateMetric(String),
    #[error("{0}")]
    RegistrationFailed(String),
    /// Intensity normalization impossible (constant input).
    #[error("{0}")]
    Normalization(String),
    #[error("{0}")]
    DegenerateHistogram(String),
    /// A metric was asked for against an empty reference set.
    #[error("{0}")]
    EmptyReference(String),
    #[error("{0}")]
    EmptySurface(String),
    #[error("{0}")]
    PhantomSpec(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    PipelineLocked(String),
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Format(_) => "format",
            Error::Unsupported(_) => "unsupported",
            Error::Dimensionality(_) => "dimensionality",
            Error::Geometry(_) => "geometry",
            Error::Argument(_) => "argument",
            Error::DegenerateMetric(_) => "degenerate-metric",
            Error::RegistrationFailed(_) => "registration-failed",
            Error::Normalization(_) => "normalization",
            Error::DegenerateHistogram(_) => "degenerate-histogram",
            Error::EmptyReference(_) => "empty-reference",
            Error::EmptySurface(_) => "empty-surface",
            Error::PhantomSpec(_) => "phantom-spec",
            Error::Config(_) => "config",
            Error::PipelineLocked(_) => "pipeline-locked",
            Error::Stage { source, .. } => source.code(),
            Error::Json(_) => "json",
        }
    }
}
