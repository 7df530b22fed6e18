//! Pluggable text backends: embedding, keyword extraction, and answer
//! generation.
//!
//! Every backend exists in two flavours selected by
//! [`ProviderConfig::endpoint`]: an HTTP client speaking a conventional
//! completion/embedding wire shape, and a deterministic offline fallback
//! (`endpoint = "offline"`) that makes the whole pipeline testable with no
//! network. Offline results are bit-stable across runs and platforms.

pub mod templates;

mod offline;
mod remote;

pub use offline::OfflineProvider;
pub use remote::HttpProvider;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;

/// A fixed-dimension text embedding. All vectors from one provider share the
/// same dimension and contain only finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Cosine similarity; 0.0 when either vector has zero norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// An ordered, normalized, deduplicated keyword list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordList(Vec<String>);

impl KeywordList {
    /// Normalize raw phrases, drop the ones that normalize to nothing, and
    /// keep the first occurrence of each.
    pub fn from_raw<I, S>(raw: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for phrase in raw {
            let norm = normalize_keyword(phrase.as_ref());
            if norm.is_empty() {
                continue;
            }
            if seen.insert(norm.clone()) {
                out.push(norm);
            }
        }
        KeywordList(out)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.0.iter().any(|k| k == normalized)
    }

    /// Drop keywords equal to the document title after normalization.
    /// Titles describe the whole document, not one chunk, and keeping them
    /// over-links chunks of the same document.
    pub fn without_title(self, title: &str) -> Self {
        let title_norm = normalize_keyword(title);
        KeywordList(self.0.into_iter().filter(|k| *k != title_norm).collect())
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }
}

impl<'a> IntoIterator for &'a KeywordList {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Canonical keyword form: lowercase, leading/trailing punctuation stripped,
/// internal whitespace collapsed to single spaces. Idempotent.
pub fn normalize_keyword(s: &str) -> String {
    let lowered = s.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    let mut out = String::with_capacity(trimmed.len());
    let mut pending_space = false;
    for ch in trimmed.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}

/// Backend selection and transport parameters. Every field has a serde
/// default, so a provider file may name only what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Base URL of the backend, or the literal `"offline"` for the
    /// deterministic fallbacks.
    pub endpoint: String,
    pub model_name: String,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Name of the environment variable holding the API key, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Expected embedding dimension D.
    pub embedding_dim: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "offline".into(),
            model_name: "offline-ngram".into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            api_key_env: None,
            embedding_dim: 64,
        }
    }
}

impl ProviderConfig {
    pub fn offline(dim: usize) -> Self {
        ProviderConfig {
            embedding_dim: dim,
            ..Default::default()
        }
    }

    pub fn is_offline(&self) -> bool {
        self.endpoint == "offline"
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout.is_zero() {
            return Err(ProviderError::InvalidConfig {
                reason: "timeout must be positive".into(),
            });
        }
        if self.embedding_dim == 0 {
            return Err(ProviderError::InvalidConfig {
                reason: "embedding_dim must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider input is empty")]
    EmptyInput,
    #[error("invalid provider config: {reason}")]
    InvalidConfig { reason: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unparsable provider response ({reason}): {raw}")]
    BadResponse { reason: String, raw: String },
    #[error("provider returned an empty response")]
    EmptyResponse,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("API key environment variable {env} is not set")]
    MissingApiKey { env: String },
}

/// Anything that can embed text into the shared vector space.
pub trait TextEmbedder: Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
    fn dim(&self) -> usize;
}

/// A configured backend bundle. Stateless after construction; concurrent
/// calls are safe.
#[derive(Debug)]
pub enum Provider {
    Offline(OfflineProvider),
    Http(HttpProvider),
}

impl Provider {
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        if cfg.is_offline() {
            Ok(Provider::Offline(OfflineProvider::new(cfg.clone())))
        } else {
            Ok(Provider::Http(HttpProvider::new(cfg.clone())?))
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        match self {
            Provider::Offline(p) => p.config(),
            Provider::Http(p) => p.config(),
        }
    }

    pub fn model_name(&self) -> &str {
        &self.config().model_name
    }

    /// Embed one text. Deterministic for a fixed (text, model).
    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let v = match self {
            Provider::Offline(p) => p.embed(text),
            Provider::Http(p) => p.embed(text)?,
        };
        let expected = self.config().embedding_dim;
        if v.dim() != expected {
            return Err(ProviderError::DimensionMismatch {
                expected,
                got: v.dim(),
            });
        }
        Ok(v)
    }

    /// Embed many texts, preserving order. Parallel under the `parallel`
    /// feature; results are identical either way.
    pub fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        exec::try_map_slice(texts, |t| self.embed_text(t))
    }

    /// Extract at most `n` representative keywords from a chunk, normalized.
    pub fn extract_chunk_keywords(
        &self,
        chunk_text: &str,
        n: usize,
    ) -> Result<KeywordList, ProviderError> {
        if chunk_text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        if n == 0 {
            return Err(ProviderError::InvalidConfig {
                reason: "keyword count must be at least 1".into(),
            });
        }
        match self {
            Provider::Offline(p) => Ok(p.chunk_keywords(chunk_text, n)),
            Provider::Http(p) => p.chunk_keywords(chunk_text, n),
        }
    }

    /// Extract an unbounded keyword set from a question, normalized.
    pub fn extract_question_keywords(&self, question: &str) -> Result<KeywordList, ProviderError> {
        if question.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        match self {
            Provider::Offline(p) => Ok(p.question_keywords(question)),
            Provider::Http(p) => p.question_keywords(question),
        }
    }

    /// Answer a question from the given context only.
    pub fn generate_answer(&self, question: &str, context: &str) -> Result<String, ProviderError> {
        if question.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        match self {
            Provider::Offline(p) => Ok(p.answer_from_context(question, context)),
            Provider::Http(p) => p.answer(question, context),
        }
    }

    /// Answer a question with no retrieved context (baseline).
    pub fn generate_answer_no_retrieval(&self, question: &str) -> Result<String, ProviderError> {
        if question.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        match self {
            Provider::Offline(p) => Ok(p.answer_without_context(question)),
            Provider::Http(p) => p.answer_no_retrieval(question),
        }
    }
}

impl TextEmbedder for Provider {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        self.embed_text(text)
    }

    fn dim(&self) -> usize {
        self.config().embedding_dim
    }
}
