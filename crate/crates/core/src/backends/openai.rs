//! Client for OpenAI-compatible local inference servers (Ollama, vLLM,
//! llama.cpp, MLX servers, LM Studio): `POST {base}/chat/completions` and
//! `POST {base}/embeddings`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::retry::{Failure, RetryPolicy};
use super::{finish_batch, Backend, ChatRequest, EmbedRole, EmbeddingVector};
use crate::error::{Error, Result};

/// Overrides `base_url` when set.
pub const BASE_URL_ENV: &str = "EHRQA_BASE_URL";

/// Retrieval instruction recommended for instruction-aware embedding models.
pub const DEFAULT_QUERY_INSTRUCTION: &str =
    "Instruct: Given a clinical question, retrieve note sentences that help answer it\nQuery: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub chat_model: Option<String>,
    pub embed_model: Option<String>,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    /// Prepended to query-side texts before embedding.
    pub query_instruction: Option<String>,
    /// Prepended to document-side texts before embedding.
    pub document_instruction: Option<String>,
    pub retry: RetryPolicy,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        OpenAiConfig {
            base_url: "http://127.0.0.1:11434/v1".into(),
            chat_model: None,
            embed_model: None,
            api_key: None,
            timeout_secs: 300,
            query_instruction: Some(DEFAULT_QUERY_INSTRUCTION.into()),
            document_instruction: None,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct OpenAiBackend {
    id: String,
    config: OpenAiConfig,
    client: reqwest::blocking::Client,
}

impl OpenAiBackend {
    pub fn new(id: impl Into<String>, mut config: OpenAiConfig) -> Result<Self> {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.trim().is_empty() {
                config.base_url = url;
            }
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(OpenAiBackend {
            id: id.into(),
            config,
            client,
        })
    }

    pub fn config(&self) -> &OpenAiConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = self.url(path);
        self.config.retry.run(|| {
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req
                .send()
                .map_err(|e| Failure::Retryable(format!("POST {url}: {e}")))?;
            let status = resp.status();
            let text = resp
                .text()
                .map_err(|e| Failure::Retryable(format!("reading body from {url}: {e}")))?;
            if status.is_server_error() || status.as_u16() == 429 {
                return Err(Failure::Retryable(format!(
                    "{url} returned {status}: {text}"
                )));
            }
            if !status.is_success() {
                return Err(Failure::Fatal(format!("{url} returned {status}: {text}")));
            }
            serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(format!("{url} returned invalid JSON: {e}")))
        })
    }

    fn model<'a>(&self, model: &'a Option<String>, what: &'static str) -> Result<&'a str> {
        model.as_deref().ok_or_else(|| self.unsupported(what))
    }
}

impl Backend for OpenAiBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        let model = self.model(&self.config.chat_model, "chat completion")?;
        let mut body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
            "stream": false,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        let resp = self.post("chat/completions", &body)?;
        let content = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse("chat response", "missing choices[0].message.content"))?;
        if content.trim().is_empty() {
            return Err(Error::EmptyOutput {
                backend: self.id.clone(),
            });
        }
        Ok(content.to_string())
    }

    fn embed(&self, texts: &[String], role: EmbedRole) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("embed called with no texts".into()));
        }
        let model = self.model(&self.config.embed_model, "embeddings")?;
        let prefix = match role {
            EmbedRole::Query => self.config.query_instruction.as_deref(),
            EmbedRole::Document => self.config.document_instruction.as_deref(),
        }
        .unwrap_or("");
        let input: Vec<String> = texts.iter().map(|t| format!("{prefix}{t}")).collect();
        let resp = self.post("embeddings", &json!({ "model": model, "input": input }))?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse("embedding response", "missing data array"))?;
        let mut indexed: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map_or(pos, |i| i as usize);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::parse("embedding response", "missing embedding"))?
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| Error::parse("embedding response", "non-numeric component"))
                })
                .collect::<Result<Vec<f64>>>()?;
            indexed.push((index, values));
        }
        indexed.sort_by_key(|(i, _)| *i);
        finish_batch(
            indexed.into_iter().map(|(_, v)| v).collect(),
            role,
            texts.len(),
        )
    }
}
