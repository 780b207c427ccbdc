use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};

/// Tokens of one text with one embedding vector per token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl TokenEmbeddings {
    pub fn new(tokens: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if tokens.len() != vectors.len() {
            return Err(Error::Embedding(format!(
                "{} tokens but {} vectors",
                tokens.len(),
                vectors.len()
            )));
        }
        if let Some(first) = vectors.first() {
            let dim = first.len();
            if dim == 0 {
                return Err(Error::Embedding("zero-dimensional vectors".into()));
            }
            for (t, v) in tokens.iter().zip(&vectors) {
                if v.len() != dim {
                    return Err(Error::Embedding(format!(
                        "vector for `{t}` has dimension {}, expected {dim}",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Embedding(format!("vector for `{t}` is not finite")));
                }
                if v.iter().all(|x| *x == 0.0) {
                    return Err(Error::Embedding(format!("vector for `{t}` has zero norm")));
                }
            }
        }
        Ok(Self { tokens, vectors })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<TokenEmbeddings>;
}

/// Embeds `text` after checking it is not blank.
pub fn embed_tokens(text: &str, provider: &dyn EmbeddingProvider) -> Result<TokenEmbeddings> {
    if text.trim().is_empty() {
        return Err(Error::InvalidArgument("cannot embed empty text".into()));
    }
    let out = provider.embed(text)?;
    if out.is_empty() {
        return Err(Error::Embedding(format!(
            "provider {} returned no tokens",
            provider.id()
        )));
    }
    Ok(out)
}

/// Lowercased word pieces: runs of alphanumerics/underscores, and every
/// other non-space character on its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Token vectors looked up in a JSON cache file:
/// `{"dim": n, "vectors": {"token": [..], ...}}`.
#[derive(Debug, Clone)]
pub struct FileCacheEmbedder {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct CacheFile {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl FileCacheEmbedder {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CacheFile = serde_json::from_str(text).map_err(|e| Error::json("embedding cache", e))?;
        if let Some((t, v)) = file.vectors.iter().find(|(_, v)| v.len() != file.dim) {
            return Err(Error::Embedding(format!(
                "cached vector for `{t}` has dimension {}, expected {}",
                v.len(),
                file.dim
            )));
        }
        Ok(Self {
            dim: file.dim,
            vectors: file.vectors,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading embedding cache {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl EmbeddingProvider for FileCacheEmbedder {
    fn id(&self) -> &str {
        "file-cache"
    }

    fn embed(&self, text: &str) -> Result<TokenEmbeddings> {
        let tokens = tokenize(text);
        let vectors = tokens
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .cloned()
                    .ok_or_else(|| Error::Embedding(format!("token `{t}` missing from cache")))
            })
            .collect::<Result<Vec<_>>>()?;
        TokenEmbeddings::new(tokens, vectors)
    }
}

/// Deterministic offline embedder: each token is a signed feature-hash of
/// its character trigrams. It is a lexical stand-in for a contextual
/// model, useful for tests and dry runs; it does not model context.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(8) }
    }

    fn vector(&self, token: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let padded: Vec<char> = format!("#{token}#").chars().collect();
        let mut add = |piece: &str, weight: f64| {
            let h = fnv1a(piece.as_bytes());
            let slot = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[slot] += sign * weight;
        };
        add(token, 1.0);
        for w in padded.windows(3) {
            add(&w.iter().collect::<String>(), 1.0);
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> &str {
        "hashing"
    }

    fn embed(&self, text: &str) -> Result<TokenEmbeddings> {
        let tokens = tokenize(text);
        let vectors = tokens.iter().map(|t| self.vector(t)).collect();
        TokenEmbeddings::new(tokens, vectors)
    }
}

/// Embeddings endpoint: POST `{"model": .., "input": text}`, expects
/// `{"tokens": [..], "vectors": [[..], ..]}`.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
        Ok(Self {
            client,
            url: url.into(),
            model: model.into(),
        })
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn id(&self) -> &str {
        "http"
    }

    fn embed(&self, text: &str) -> Result<TokenEmbeddings> {
        let resp = self
            .client
            .post(&self.url)
            .json(&json!({"model": self.model, "input": text}))
            .send()
            .map_err(|e| Error::Embedding(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Embedding(format!("HTTP {status} from {}", self.url)));
        }
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| Error::Embedding(format!("malformed embeddings response: {e}")))?;
        TokenEmbeddings::new(body.tokens, body.vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_words_and_punctuation() {
        assert_eq!(
            tokenize("Worker w1, near ex1."),
            vec!["worker", "w1", ",", "near", "ex1", "."]
        );
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn file_cache_hit() {
        let cache = FileCacheEmbedder::from_json(r#"{"dim": 3, "vectors": {"worker": [0.1, 0.2, 0.3]}}"#).unwrap();
        let e = embed_tokens("worker", &cache).unwrap();
        assert_eq!(e.tokens(), ["worker"]);
        assert_eq!(e.vectors()[0], vec![0.1, 0.2, 0.3]);
        assert!(matches!(embed_tokens("crane", &cache), Err(Error::Embedding(_))));
    }

    #[test]
    fn empty_text_is_an_argument_error() {
        let h = HashingEmbedder::default();
        assert!(matches!(embed_tokens("", &h), Err(Error::InvalidArgument(_))));
        assert!(matches!(embed_tokens(" \n", &h), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn providers_are_deterministic() {
        let h = HashingEmbedder::default();
        let a = embed_tokens("The worker w1 is near the excavator ex1", &h).unwrap();
        let b = embed_tokens("The worker w1 is near the excavator ex1", &h).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 256);
    }

    #[test]
    fn rejects_malformed_embeddings() {
        assert!(TokenEmbeddings::new(vec!["a".into()], vec![]).is_err());
        assert!(TokenEmbeddings::new(vec!["a".into()], vec![vec![0.0, 0.0]]).is_err());
        assert!(TokenEmbeddings::new(vec!["a".into(), "b".into()], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
