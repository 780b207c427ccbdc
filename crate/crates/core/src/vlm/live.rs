use std::thread;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{CompletionRequest, InferenceConfig, RawResponse, TokenUsage, VlmBackend};
use crate::error::{Error, Result};

/// JSON chat-completion client for an HTTP inference endpoint.
///
/// Timeouts, connection failures, 429 and 5xx responses are retried with
/// exponential backoff up to `max_retries` times; other 4xx responses fail
/// immediately.
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
}

enum Attempt {
    Retry(Error),
    Fatal(Error),
}

impl LiveBackend {
    pub fn new(cfg: &InferenceConfig) -> Result<Self> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
        let base = cfg.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(Self {
            client,
            url,
            api_key: std::env::var(&cfg.auth_env).ok().filter(|k| !k.is_empty()),
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(500),
        })
    }

    /// Base delay before the first retry; doubles on every further attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &Value) -> std::result::Result<(String, Option<TokenUsage>), Attempt> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(Error::Timeout { attempts: 0 })
            } else {
                Attempt::Retry(Error::Endpoint {
                    attempts: 0,
                    message: e.to_string(),
                })
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            Attempt::Retry(Error::Endpoint {
                attempts: 0,
                message: format!("reading response body: {e}"),
            })
        })?;
        if !status.is_success() {
            let err = Error::Endpoint {
                attempts: 0,
                message: format!("HTTP {status}: {}", truncate(&text, 300)),
            };
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        parse_chat_response(&text).map_err(Attempt::Fatal)
    }
}

impl VlmBackend for LiveBackend {
    fn id(&self) -> &str {
        "live"
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawResponse> {
        let body = request_body(request);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let start = Instant::now();
            match self.attempt(&body) {
                Ok((text, token_usage)) => {
                    return Ok(RawResponse {
                        text,
                        latency: start.elapsed(),
                        token_usage,
                        backend_id: "live".into(),
                    })
                }
                Err(Attempt::Retry(e)) if attempts <= self.max_retries => {
                    log::warn!("attempt {attempts} against {} failed: {e}; retrying", self.url);
                    thread::sleep(self.backoff * 2u32.saturating_pow(attempts - 1));
                }
                Err(Attempt::Retry(e)) | Err(Attempt::Fatal(e)) => {
                    return Err(with_attempts(e, attempts));
                }
            }
        }
    }
}

fn with_attempts(e: Error, attempts: u32) -> Error {
    match e {
        Error::Timeout { .. } => Error::Timeout { attempts },
        Error::Endpoint { message, .. } => Error::Endpoint { attempts, message },
        other => other,
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Chat-completion request body carrying the prompt and the base64 image.
pub(crate) fn request_body(request: &CompletionRequest<'_>) -> Value {
    let image = base64::engine::general_purpose::STANDARD.encode(request.image);
    json!({
        "model": request.model,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": request.prompt},
                {"type": "image", "data": image},
            ],
        }],
    })
}

/// Extracts the first choice's message content, which may be a string or a
/// list of text parts.
pub(crate) fn parse_chat_response(body: &str) -> Result<(String, Option<TokenUsage>)> {
    let v: Value = serde_json::from_str(body).map_err(|e| Error::Endpoint {
        attempts: 0,
        message: format!("response is not JSON: {e}"),
    })?;
    let content = &v["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => {
            return Err(Error::Endpoint {
                attempts: 0,
                message: "response has no choices[0].message.content".into(),
            })
        }
    };
    let usage = v.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok((text, usage))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shape() {
        let req = CompletionRequest {
            image: b"\x89PNG",
            prompt: "hello",
            model: "gemma",
            temperature: 0.1,
            max_tokens: 180,
        };
        let body = request_body(&req);
        assert_eq!(body["model"], "gemma");
        assert_eq!(body["temperature"], 0.1);
        assert_eq!(body["max_tokens"], 180);
        let content = &body["messages"][0]["content"];
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(content[0], json!({"type": "text", "text": "hello"}));
        assert_eq!(content[1]["type"], "image");
        assert_eq!(content[1]["data"], "iVBORw==");
    }

    #[test]
    fn parses_string_and_part_content() {
        let (t, u) = parse_chat_response(
            r#"{"choices":[{"message":{"content":"Hazards: none"}}],"usage":{"prompt_tokens":10,"completion_tokens":3}}"#,
        )
        .unwrap();
        assert_eq!(t, "Hazards: none");
        assert_eq!(u.unwrap().completion_tokens, 3);
        let (t, u) = parse_chat_response(
            r#"{"choices":[{"message":{"content":[{"type":"text","text":"Haz"},{"type":"text","text":"ards: none"}]}}]}"#,
        )
        .unwrap();
        assert_eq!(t, "Hazards: none");
        assert!(u.is_none());
        assert!(parse_chat_response(r#"{"choices":[]}"#).is_err());
    }
}
