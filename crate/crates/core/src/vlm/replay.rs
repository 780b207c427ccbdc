use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{duration_ms, CompletionRequest, RawResponse, TokenUsage, VlmBackend};
use crate::error::{Error, Result};

/// Stored request/response pair, one `<digest>.json` file per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub digest: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub image_bytes: usize,
    pub prompt: String,
    pub response: String,
    #[serde(rename = "latency_ms", with = "duration_ms")]
    pub latency: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

impl Transcript {
    pub fn new(request: &CompletionRequest<'_>, response: &RawResponse) -> Self {
        Self {
            digest: request.digest(),
            model: request.model.to_string(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            image_bytes: request.image.len(),
            prompt: request.prompt.to_string(),
            response: response.text.clone(),
            latency: response.latency,
            token_usage: response.token_usage,
        }
    }

    pub fn path_in(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.json", self.digest))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let path = self.path_in(dir);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json("transcript", e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}

/// Serves stored transcripts keyed by request digest.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl VlmBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse> {
        let digest = request.digest();
        let path = self.dir.join(format!("{digest}.json"));
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::ReplayMiss {
                    digest,
                    dir: self.dir.clone(),
                })
            }
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        };
        let t: Transcript =
            serde_json::from_str(&text).map_err(|e| Error::json(format!("transcript {}", path.display()), e))?;
        Ok(RawResponse {
            text: t.response,
            latency: t.latency,
            token_usage: t.token_usage,
            backend_id: "replay".into(),
        })
    }
}

/// Forwards to an inner backend and stores every successful exchange as a
/// replay transcript.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: VlmBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into() }
    }
}

impl<B: VlmBackend> VlmBackend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse> {
        let response = self.inner.complete(request)?;
        Transcript::new(request, &response).save(&self.dir)?;
        Ok(response)
    }
}
