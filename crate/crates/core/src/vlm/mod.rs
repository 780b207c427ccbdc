//! Multimodal inference client: request configuration, backends (live HTTP,
//! transcript replay, recording) and token-embedding providers.

mod embed;
mod live;
mod replay;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prompt::PromptBundle;

pub use embed::{
    embed_tokens, tokenize, EmbeddingProvider, FileCacheEmbedder, HashingEmbedder, HttpEmbedder, TokenEmbeddings,
};
pub use live::LiveBackend;
pub use replay::{RecordingBackend, ReplayBackend, Transcript};

/// Environment variable holding the API credential for live endpoints.
pub const API_KEY_ENV: &str = "HAZGUARD_API_KEY";
/// Environment variable overriding the default endpoint base URL.
pub const ENDPOINT_ENV: &str = "HAZGUARD_ENDPOINT";

pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8000/v1";

/// Decoding parameters fixed for annotation-draft generation.
pub const ANNOTATION_TEMPERATURE: f64 = 0.1;
pub const ANNOTATION_MAX_TOKENS: u32 = 180;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub max_retries: u32,
    /// Name of the environment variable carrying the bearer token.
    pub auth_env: String,
}

impl InferenceConfig {
    /// Evaluation profile: temperature 0.1, 256 new tokens.
    pub fn evaluation(model_name: impl Into<String>) -> Self {
        Self {
            endpoint: std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string()),
            model_name: model_name.into(),
            temperature: 0.1,
            max_tokens: 256,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            auth_env: API_KEY_ENV.to_string(),
        }
    }

    /// Annotation-draft profile: temperature 0.1, 180 new tokens.
    pub fn annotation(model_name: impl Into<String>) -> Self {
        Self {
            temperature: ANNOTATION_TEMPERATURE,
            max_tokens: ANNOTATION_MAX_TOKENS,
            ..Self::evaluation(model_name)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(Error::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    /// Rejects anything but the fixed annotation decoding parameters.
    pub fn check_annotation_profile(&self) -> Result<()> {
        self.validate()?;
        if self.temperature != ANNOTATION_TEMPERATURE || self.max_tokens != ANNOTATION_MAX_TOKENS {
            return Err(Error::Config(format!(
                "annotation drafts require temperature {ANNOTATION_TEMPERATURE} and max_tokens {ANNOTATION_MAX_TOKENS}, got {} and {}",
                self.temperature, self.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
    pub backend_id: String,
}

/// One image+prompt request as seen by a backend.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub image: &'a [u8],
    pub prompt: &'a str,
    pub model: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest<'_> {
    pub fn digest(&self) -> String {
        request_digest(self.image, self.prompt, self.model)
    }
}

/// A multimodal completion backend. Implementations report the latency of
/// the model call itself; replay backends report the recorded latency.
pub trait VlmBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse>;
}

impl<B: VlmBackend + ?Sized> VlmBackend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse> {
        (**self).complete(request)
    }
}

/// Sends one image and rendered prompt to `backend`.
pub fn complete(
    backend: &dyn VlmBackend,
    image: &[u8],
    prompt: &PromptBundle,
    cfg: &InferenceConfig,
) -> Result<RawResponse> {
    if image.is_empty() {
        return Err(Error::InvalidArgument("image bytes are empty".into()));
    }
    cfg.validate()?;
    backend.complete(&CompletionRequest {
        image,
        prompt: &prompt.text,
        model: &cfg.model_name,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    })
}

/// SHA-256 over the model name, prompt and image, each length-prefixed.
pub fn request_digest(image: &[u8], prompt: &str, model_name: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"hazguard-request-v1");
    for part in [model_name.as_bytes(), prompt.as_bytes(), image] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

/// Backend built from a closure; handy for fakes and adapters.
pub struct FnBackend<F> {
    id: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&CompletionRequest<'_>) -> Result<String> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> VlmBackend for FnBackend<F>
where
    F: Fn(&CompletionRequest<'_>) -> Result<String> + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse> {
        let start = Instant::now();
        let text = (self.f)(request)?;
        Ok(RawResponse {
            text,
            latency: start.elapsed(),
            token_usage: None,
            backend_id: self.id.clone(),
        })
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        if !(ms >= 0.0 && ms.is_finite()) {
            return Err(serde::de::Error::custom("duration must be a non-negative number of ms"));
        }
        Ok(Duration::from_secs_f64(ms / 1e3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptMode;

    fn bundle(text: &str) -> PromptBundle {
        PromptBundle {
            mode: PromptMode::Baseline,
            text: text.into(),
            template_version: "t".into(),
            entity_count: 0,
        }
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = request_digest(b"img", "prompt", "m");
        assert_eq!(a, request_digest(b"img", "prompt", "m"));
        assert_ne!(a, request_digest(b"img", "prompt.", "m"));
        assert_ne!(a, request_digest(b"img", "prompt", "n"));
        // length prefixes keep field boundaries unambiguous
        assert_ne!(request_digest(b"", "ab", "m"), request_digest(b"b", "a", "m"));
        assert_eq!(
            request_digest(b"", "", ""),
            "018f525c948a0a7778c1c0f65baf3ac5f5dfee344f0bdd623e3fdac58241b04a"
        );
    }

    #[test]
    fn profiles() {
        let a = InferenceConfig::annotation("gpt");
        assert_eq!((a.temperature, a.max_tokens), (0.1, 180));
        a.check_annotation_profile().unwrap();
        let e = InferenceConfig::evaluation("gpt");
        assert_eq!((e.temperature, e.max_tokens), (0.1, 256));
        assert!(e.check_annotation_profile().is_err());
        let hot = InferenceConfig {
            temperature: 0.7,
            ..InferenceConfig::annotation("gpt")
        };
        assert!(matches!(hot.check_annotation_profile(), Err(Error::Config(_))));
        let bad = InferenceConfig { max_tokens: 0, ..e };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_latency_backend_reports_sub_millisecond() {
        let backend = FnBackend::new("fake", |_r: &CompletionRequest<'_>| Ok("Hazards: none".to_string()));
        let cfg = InferenceConfig::evaluation("m");
        let r = complete(&backend, b"x", &bundle("p"), &cfg).unwrap();
        assert!(r.latency < Duration::from_millis(1));
        assert_eq!(r.backend_id, "fake");
    }

    #[test]
    fn empty_image_rejected() {
        let backend = FnBackend::new("fake", |_r: &CompletionRequest<'_>| Ok(String::new()));
        let cfg = InferenceConfig::evaluation("m");
        assert!(matches!(
            complete(&backend, b"", &bundle("p"), &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn concurrent_requests_are_not_cross_wired() {
        let backend = FnBackend::new("echo", |r: &CompletionRequest<'_>| Ok(r.digest()));
        let cfg = InferenceConfig::evaluation("m");
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..16)
                .map(|i| {
                    let backend = &backend;
                    let cfg = &cfg;
                    s.spawn(move || {
                        let image = format!("image-{i}").into_bytes();
                        let p = bundle(&format!("prompt {i}"));
                        let r = complete(backend, &image, &p, cfg).unwrap();
                        (r.text, request_digest(&image, &p.text, "m"))
                    })
                })
                .collect();
            for h in handles {
                let (got, want) = h.join().unwrap();
                assert_eq!(got, want);
            }
        });
    }
}
