//! Content-addressed response cache.
//!
//! Layout: one `<sha256>.json` file per [`CacheKey`] directly under the
//! cache directory, holding `{key, backend, op, request, response}`.
//! Entries never expire. A key is the SHA-256 of the canonical JSON of
//! `{backend, op, request}`; object keys serialize sorted, so equal
//! requests always hash equally.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, ChatRequest, EmbedRole, EmbeddingVector};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_atomic};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn compute(backend_id: &str, op: &str, request: &Value) -> Self {
        let canonical = json!({ "backend": backend_id, "op": op, "request": request });
        CacheKey(sha256_hex(canonical.to_string().as_bytes()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    /// Backend invocations (cache misses), per operation.
    pub misses: BTreeMap<String, u64>,
}

impl CacheStats {
    pub fn backend_calls(&self) -> u64 {
        self.misses.values().sum()
    }

    pub fn calls(&self, op: &str) -> u64 {
        self.misses.get(op).copied().unwrap_or(0)
    }

    pub fn hit_ratio(&self) -> f64 {
        let total = self.hits + self.backend_calls();
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

#[derive(Debug)]
pub struct DiskCache {
    dir: PathBuf,
    locks: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
    hits: AtomicU64,
    misses: Mutex<BTreeMap<String, u64>>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    backend: String,
    op: String,
    request: Value,
    response: Value,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(DiskCache {
            dir,
            locks: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::SeqCst),
            misses: self.misses.lock().unwrap().clone(),
        }
    }

    /// Number of entry files on disk.
    pub fn len(&self) -> Result<usize> {
        let entries = std::fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        Ok(entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count())
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.as_str()))
    }

    fn key_lock(&self, key: &CacheKey) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(key.clone())
            .or_default()
            .clone()
    }

    fn lookup(&self, key: &CacheKey) -> Result<Option<Value>> {
        let path = self.path(key);
        match std::fs::read(&path) {
            Ok(bytes) => {
                let entry: Entry = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::parse(path.display().to_string(), e))?;
                self.hits.fetch_add(1, Ordering::SeqCst);
                Ok(Some(entry.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn store(
        &self,
        key: CacheKey,
        backend: &str,
        op: &str,
        request: Value,
        response: Value,
    ) -> Result<()> {
        *self
            .misses
            .lock()
            .unwrap()
            .entry(op.to_string())
            .or_insert(0) += 1;
        let path = self.path(&key);
        let entry = Entry {
            key,
            backend: backend.to_string(),
            op: op.to_string(),
            request,
            response,
        };
        let mut bytes = serde_json::to_vec(&entry).expect("cache entry serializes");
        bytes.push(b'\n');
        write_atomic(&path, &bytes)
    }

    /// Returns the cached response for `request`, computing and persisting
    /// it on a miss. Concurrent callers with the same key compute once.
    pub fn get_or_compute(
        &self,
        backend: &str,
        op: &str,
        request: Value,
        compute: impl FnOnce() -> Result<Value>,
    ) -> Result<Value> {
        let key = CacheKey::compute(backend, op, &request);
        let lock = self.key_lock(&key);
        let _guard = lock.lock().unwrap();
        if let Some(hit) = self.lookup(&key)? {
            return Ok(hit);
        }
        let response = compute()?;
        self.store(key, backend, op, request, response.clone())?;
        Ok(response)
    }

    /// Batched variant: one cache entry per item, with all misses computed
    /// in a single call to `compute` (which receives the miss positions).
    fn get_or_compute_batch(
        &self,
        backend: &str,
        op: &str,
        requests: Vec<Value>,
        compute: impl FnOnce(&[usize]) -> Result<Vec<Value>>,
    ) -> Result<Vec<Value>> {
        let keys: Vec<CacheKey> = requests
            .iter()
            .map(|r| CacheKey::compute(backend, op, r))
            .collect();
        let mut out: Vec<Option<Value>> = Vec::with_capacity(keys.len());
        let mut missing = Vec::new();
        for (i, key) in keys.iter().enumerate() {
            let hit = self.lookup(key)?;
            if hit.is_none() {
                missing.push(i);
            }
            out.push(hit);
        }
        if !missing.is_empty() {
            let computed = compute(&missing)?;
            if computed.len() != missing.len() {
                return Err(Error::InvalidInput(format!(
                    "backend returned {} results for {} inputs",
                    computed.len(),
                    missing.len()
                )));
            }
            for (&i, value) in missing.iter().zip(computed) {
                let lock = self.key_lock(&keys[i]);
                let _guard = lock.lock().unwrap();
                self.store(
                    keys[i].clone(),
                    backend,
                    op,
                    requests[i].clone(),
                    value.clone(),
                )?;
                out[i] = Some(value);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}

/// A backend whose every call goes through a [`DiskCache`].
pub struct CachedBackend<B> {
    inner: B,
    cache: Arc<DiskCache>,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, cache: Arc<DiskCache>) -> Self {
        CachedBackend { inner, cache }
    }

    pub fn cache(&self) -> &DiskCache {
        &self.cache
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        let payload = serde_json::to_value(request).expect("request serializes");
        let value = self.cache.get_or_compute(self.id(), "chat", payload, || {
            self.inner.chat(request).map(Value::String)
        })?;
        value
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::parse("cache entry", "chat response is not a string"))
    }

    fn embed(&self, texts: &[String], role: EmbedRole) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("embed called with no texts".into()));
        }
        let requests = texts
            .iter()
            .map(|t| json!({ "text": t, "role": role }))
            .collect();
        let values = self
            .cache
            .get_or_compute_batch(self.id(), "embed", requests, |missing| {
                let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
                let vectors = self.inner.embed(&batch, role)?;
                Ok(vectors.iter().map(|v| json!(v.values())).collect())
            })?;
        let raw = values
            .into_iter()
            .map(|v| {
                serde_json::from_value::<Vec<f64>>(v).map_err(|e| Error::parse("cache entry", e))
            })
            .collect::<Result<Vec<_>>>()?;
        super::finish_batch(raw, role, texts.len())
    }

    fn score_pairs(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        let requests = candidates
            .iter()
            .map(|c| json!({ "query": query, "candidate": c }))
            .collect();
        let values = self
            .cache
            .get_or_compute_batch(self.id(), "score", requests, |missing| {
                let batch: Vec<String> = missing.iter().map(|&i| candidates[i].clone()).collect();
                Ok(self
                    .inner
                    .score_pairs(query, &batch)?
                    .into_iter()
                    .map(|s| json!(s))
                    .collect())
            })?;
        values
            .into_iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::parse("cache entry", "score is not a number"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{Message, MockBackend};

    #[test]
    fn identical_requests_hit_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::open(dir.path()).unwrap());
        let mock = MockBackend::new("mock");
        let cached = CachedBackend::new(&mock, cache.clone());
        let req = ChatRequest::new(vec![Message::user("echo: hello")]);
        assert_eq!(cached.chat(&req).unwrap(), "hello");
        assert_eq!(cached.chat(&req).unwrap(), "hello");
        assert_eq!(mock.chat_calls(), 1);
        let stats = cache.stats();
        assert_eq!(stats.hits, 1);
        assert_eq!(stats.calls("chat"), 1);
        assert_eq!(cache.len().unwrap(), 1);
    }

    #[test]
    fn keys_are_stable_and_distinct() {
        let a = CacheKey::compute("m", "chat", &json!({"x": 1, "y": [1, 2]}));
        let b = CacheKey::compute("m", "chat", &json!({"y": [1, 2], "x": 1}));
        let c = CacheKey::compute("m", "chat", &json!({"x": 2, "y": [1, 2]}));
        let d = CacheKey::compute("other", "chat", &json!({"x": 1, "y": [1, 2]}));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn embeddings_cached_per_text() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::open(dir.path()).unwrap());
        let mock = MockBackend::new("mock");
        let cached = CachedBackend::new(&mock, cache.clone());
        let texts = vec!["chest pain".to_string(), "fever".to_string()];
        let first = cached.embed(&texts, EmbedRole::Query).unwrap();
        let again = cached
            .embed(
                &["fever".to_string(), "cough".to_string()],
                EmbedRole::Query,
            )
            .unwrap();
        assert_eq!(first[1], again[0]);
        assert_eq!(cache.stats().calls("embed"), 3);
        assert_eq!(cache.stats().hits, 1);
        // role is part of the key
        cached
            .embed(&["fever".to_string()], EmbedRole::Document)
            .unwrap();
        assert_eq!(cache.stats().calls("embed"), 4);
    }

    #[test]
    fn failures_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(DiskCache::open(dir.path()).unwrap());
        let mock = MockBackend::new("mock");
        let cached = CachedBackend::new(&mock, cache.clone());
        let req = ChatRequest::new(vec![Message::user("no rule matches this")]);
        assert!(cached.chat(&req).is_err());
        assert!(cache.is_empty().unwrap());
    }
}
