//! Access to chat-completion, embedding, and pair-scoring capabilities.
//!
//! Everything goes through the [`Backend`] trait. A backend implements the
//! capabilities it has; calling any other one yields
//! [`Error::Capability`]. [`CachedBackend`] wraps any backend with the
//! content-addressed disk cache that makes runs replayable offline.

mod cache;
pub mod mock;
mod openai;
mod retry;
mod score_service;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{CacheKey, CacheStats, CachedBackend, DiskCache};
pub use mock::MockBackend;
pub use openai::{OpenAiBackend, OpenAiConfig, BASE_URL_ENV};
pub use retry::RetryPolicy;
pub use score_service::{ScoreResponse, ScoreServiceBackend};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_TOP_P: f64 = 0.9;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Sampling settings applied to every chat call unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Sampling seed forwarded to the server. Also distinguishes otherwise
    /// identical requests in the cache (e.g. repeated synthetic draws).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>) -> Self {
        ChatRequest::with_decoding(messages, Decoding::default())
    }

    pub fn with_decoding(messages: Vec<Message>, decoding: Decoding) -> Self {
        ChatRequest {
            messages,
            temperature: decoding.temperature,
            top_p: decoding.top_p,
            max_tokens: decoding.max_tokens,
            seed: None,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::InvalidInput("chat request without messages".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature {} < 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidInput("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Content of the last user message.
    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// All message contents concatenated, for substring matching.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedRole {
    Query,
    Document,
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    role: EmbedRole,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm. Rejects non-finite components and
    /// the zero vector.
    pub fn normalized(values: Vec<f64>, role: EmbedRole) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "embedding is empty or has non-finite components".into(),
            ));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput(
                "cannot normalize a zero embedding".into(),
            ));
        }
        Ok(EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
            role,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn role(&self) -> EmbedRole {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::InvalidInput(format!(
            "embedding dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Normalizes a batch of raw vectors and checks they share one dimension.
pub(crate) fn finish_batch(
    raw: Vec<Vec<f64>>,
    role: EmbedRole,
    expected: usize,
) -> Result<Vec<EmbeddingVector>> {
    if raw.len() != expected {
        return Err(Error::InvalidInput(format!(
            "backend returned {} embeddings for {} inputs",
            raw.len(),
            expected
        )));
    }
    let dim = raw.first().map(Vec::len).unwrap_or(0);
    if raw.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidInput(
            "embedding dimension mismatch within batch".into(),
        ));
    }
    raw.into_iter()
        .map(|v| EmbeddingVector::normalized(v, role))
        .collect()
}

pub trait Backend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> &str;

    fn chat(&self, _request: &ChatRequest) -> Result<String> {
        Err(self.unsupported("chat completion"))
    }

    /// One unit-norm vector per input, in input order.
    fn embed(&self, _texts: &[String], _role: EmbedRole) -> Result<Vec<EmbeddingVector>> {
        Err(self.unsupported("embeddings"))
    }

    /// Relevance of each candidate to `query`; higher is more relevant.
    fn score_pairs(&self, _query: &str, _candidates: &[String]) -> Result<Vec<f64>> {
        Err(self.unsupported("pair scoring"))
    }

    fn unsupported(&self, capability: &'static str) -> Error {
        Error::Capability {
            backend: self.id().to_string(),
            capability,
        }
    }
}

pub fn pair_score(backend: &dyn Backend, query: &str, candidate: &str) -> Result<f64> {
    let scores = backend.score_pairs(query, &[candidate.to_string()])?;
    scores
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidInput("pair scorer returned no score".into()))
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn chat(&self, request: &ChatRequest) -> Result<String> {
        (**self).chat(request)
    }
    fn embed(&self, texts: &[String], role: EmbedRole) -> Result<Vec<EmbeddingVector>> {
        (**self).embed(texts, role)
    }
    fn score_pairs(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        (**self).score_pairs(query, candidates)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn chat(&self, request: &ChatRequest) -> Result<String> {
        (**self).chat(request)
    }
    fn embed(&self, texts: &[String], role: EmbedRole) -> Result<Vec<EmbeddingVector>> {
        (**self).embed(texts, role)
    }
    fn score_pairs(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        (**self).score_pairs(query, candidates)
    }
}

impl fmt::Debug for dyn Backend + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Backend({})", self.id())
    }
}
