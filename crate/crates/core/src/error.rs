use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One problem found while validating a manifest, tied to its source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestIssue {
    pub line: usize,
    pub image: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ManifestIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.image {
            Some(image) => write!(f, "line {} ({}): {}", self.line, image, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bounding box rejected: {0}")]
    InvalidBox(String),

    #[error("unknown object class `{0}`")]
    UnknownClass(String),

    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },

    #[error("endpoint error after {attempts} attempt(s): {message}")]
    Endpoint { attempts: u32, message: String },

    #[error("no replay transcript for request digest {digest} in {dir}")]
    ReplayMiss { digest: String, dir: PathBuf },

    #[error("embedding provider failed: {0}")]
    Embedding(String),

    #[error("could not decode image: {0}")]
    ImageDecode(String),

    #[error("detection file missing: {0}")]
    DetectionFileMissing(PathBuf),

    #[error("detector model could not be loaded: {0}")]
    ModelLoad(String),

    #[error("detector inference failed: {0}")]
    Inference(String),

    #[error("detector endpoint failed: {0}")]
    DetectorEndpoint(String),

    #[error("manifest {path} is invalid:\n{}", format_issues(.issues))]
    ManifestInvalid { path: PathBuf, issues: Vec<ManifestIssue> },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

fn format_issues(issues: &[ManifestIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Whether a remote call failing with this error may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Timeout { .. })
    }

    /// Configuration problems abort a run before any image is processed.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::ManifestInvalid { .. } | Error::ModelLoad(_)
        )
    }
}
