use thiserror::Error;

use ssdkg_core::datakg::DataKgError;
use ssdkg_core::evaluation::EvalError;
use ssdkg_core::graph::taxonomy::TaxonomyError;
use ssdkg_core::graph::GraphError;
use ssdkg_core::literature::LiteratureError;
use ssdkg_core::reasoning::ReasoningError;
use ssdkg_core::telemetry::TelemetryError;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("audit bundle is missing the {0} artifact")]
    MissingArtifact(&'static str),
    #[error("audit artifact does not resolve: {0}")]
    Unresolved(String),
    #[error("window {tag} was dropped by coverage gating (coverage {coverage} below the keep threshold)")]
    Dropped { tag: String, coverage: f64 },
    #[error("storage error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("stored document {path} is invalid: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    DataKg(#[from] DataKgError),
    #[error(transparent)]
    Literature(#[from] LiteratureError),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl AppError {
    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
        move |source| AppError::Io { path: path.display().to_string(), source }
    }

    /// HTTP status class: 404, 400/422, 502 or 500.
    pub fn status_code(&self) -> u16 {
        match self {
            AppError::NotFound(_) | AppError::DataKg(DataKgError::NotFound(_)) => 404,
            AppError::BadRequest(_)
            | AppError::MissingArtifact(_)
            | AppError::Telemetry(_)
            | AppError::DataKg(DataKgError::InvalidTag(_))
            | AppError::Taxonomy(_)
            | AppError::Reasoning(ReasoningError::InvalidIntent(_) | ReasoningError::NoTerms) => 400,
            AppError::Literature(
                LiteratureError::MissingFields(_)
                | LiteratureError::Json(_)
                | LiteratureError::InvalidCollection(_)
                | LiteratureError::VersionRegression { .. }
                | LiteratureError::Proposal(_),
            ) => 400,
            AppError::Dropped { .. } => 422,
            AppError::Reasoning(ReasoningError::Backend { .. }) => 502,
            _ => 500,
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
