//! Deterministic in-process backend for tests, examples, and offline runs.
//!
//! * chat: a last user message starting with `echo:` returns the rest of
//!   that message (trimmed). Otherwise the first rule whose needle occurs in
//!   any message wins, then the responder closure, then the fallback text.
//! * embed: [`hash_embedding`], then L2 normalization.
//! * pair scoring: [`overlap_ratio`].

mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{finish_batch, Backend, ChatRequest, EmbedRole, EmbeddingVector};
use crate::error::{Error, Result};
use crate::text::lower_tokens;

pub use scripted::scripted_response;

pub const MOCK_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// The mock's raw (unnormalized) embedding.
///
/// Each lowercased alphanumeric token `w` is hashed with 64-bit FNV-1a over
/// `seed.to_le_bytes() ++ w`; it adds `+1` (top bit clear) or `-1` (top bit
/// set) at index `hash % dim`. Text without tokens maps to the first basis
/// vector.
pub fn hash_embedding(text: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for token in lower_tokens(text) {
        let h = fnv1a(seed, token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    v
}

/// Fraction of the query's distinct tokens that also occur in the candidate.
/// Zero for a query without tokens.
pub fn overlap_ratio(query: &str, candidate: &str) -> f64 {
    let mut q = lower_tokens(query);
    q.sort();
    q.dedup();
    if q.is_empty() {
        return 0.0;
    }
    let c = lower_tokens(candidate);
    let shared = q.iter().filter(|t| c.contains(t)).count();
    shared as f64 / q.len() as f64
}

pub type Responder = Arc<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

pub struct MockBackend {
    id: String,
    rules: Vec<(String, String)>,
    responder: Option<Responder>,
    fallback: Option<String>,
    seed: u64,
    dim: usize,
    query_prefix: String,
    document_prefix: String,
    chat_enabled: bool,
    embed_enabled: bool,
    pair_enabled: bool,
    chat_calls: AtomicU64,
    embed_calls: AtomicU64,
    pair_calls: AtomicU64,
}

impl MockBackend {
    pub fn new(id: impl Into<String>) -> Self {
        MockBackend {
            id: id.into(),
            rules: Vec::new(),
            responder: None,
            fallback: None,
            seed: 0,
            dim: MOCK_DIM,
            query_prefix: String::new(),
            document_prefix: String::new(),
            chat_enabled: true,
            embed_enabled: true,
            pair_enabled: true,
            chat_calls: AtomicU64::new(0),
            embed_calls: AtomicU64::new(0),
            pair_calls: AtomicU64::new(0),
        }
    }

    /// A mock that answers every prompt family shipped with this crate with
    /// plausible, deterministic output. See [`scripted_response`].
    pub fn scripted(id: impl Into<String>) -> Self {
        MockBackend::new(id).with_responder(scripted_response)
    }

    pub fn with_rule(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push((needle.into(), response.into()));
        self
    }

    pub fn with_responder(
        mut self,
        f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.responder = Some(Arc::new(f));
        self
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_prefixes(mut self, query: impl Into<String>, document: impl Into<String>) -> Self {
        self.query_prefix = query.into();
        self.document_prefix = document.into();
        self
    }

    pub fn without_chat(mut self) -> Self {
        self.chat_enabled = false;
        self
    }

    pub fn without_embeddings(mut self) -> Self {
        self.embed_enabled = false;
        self
    }

    pub fn without_pair_scoring(mut self) -> Self {
        self.pair_enabled = false;
        self
    }

    pub fn chat_calls(&self) -> u64 {
        self.chat_calls.load(Ordering::SeqCst)
    }

    pub fn embed_calls(&self) -> u64 {
        self.embed_calls.load(Ordering::SeqCst)
    }

    pub fn pair_calls(&self) -> u64 {
        self.pair_calls.load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> u64 {
        self.chat_calls() + self.embed_calls() + self.pair_calls()
    }

    fn respond(&self, request: &ChatRequest) -> Option<String> {
        if let Some(rest) = request
            .last_user()
            .and_then(|u| u.trim_start().strip_prefix("echo:"))
        {
            return Some(rest.trim().to_string());
        }
        let text = request.full_text();
        if let Some((_, response)) = self
            .rules
            .iter()
            .find(|(needle, _)| text.contains(needle.as_str()))
        {
            return Some(response.clone());
        }
        self.responder
            .as_ref()
            .and_then(|f| f(request))
            .or_else(|| self.fallback.clone())
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        if !self.chat_enabled {
            return Err(self.unsupported("chat completion"));
        }
        request.validate()?;
        self.chat_calls.fetch_add(1, Ordering::SeqCst);
        let out = self.respond(request).ok_or_else(|| {
            Error::Generation(format!(
                "mock `{}` has no response for this prompt",
                self.id
            ))
        })?;
        if out.trim().is_empty() {
            return Err(Error::EmptyOutput {
                backend: self.id.clone(),
            });
        }
        Ok(out)
    }

    fn embed(&self, texts: &[String], role: EmbedRole) -> Result<Vec<EmbeddingVector>> {
        if !self.embed_enabled {
            return Err(self.unsupported("embeddings"));
        }
        if texts.is_empty() {
            return Err(Error::InvalidInput("embed called with no texts".into()));
        }
        self.embed_calls
            .fetch_add(texts.len() as u64, Ordering::SeqCst);
        let prefix = match role {
            EmbedRole::Query => &self.query_prefix,
            EmbedRole::Document => &self.document_prefix,
        };
        let raw = texts
            .iter()
            .map(|t| hash_embedding(&format!("{prefix}{t}"), self.seed, self.dim))
            .collect();
        finish_batch(raw, role, texts.len())
    }

    fn score_pairs(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        if !self.pair_enabled {
            return Err(self.unsupported("pair scoring"));
        }
        self.pair_calls
            .fetch_add(candidates.len() as u64, Ordering::SeqCst);
        Ok(candidates.iter().map(|c| overlap_ratio(query, c)).collect())
    }
}
