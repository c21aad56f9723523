//! Client for the cross-encoder scoring service:
//! `POST {base}/score {query, sentences[]}` returning one probability record
//! per sentence.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::retry::{Failure, RetryPolicy};
use super::Backend;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub p_essential: f64,
    pub p_supplementary: f64,
    pub p_not_relevant: f64,
    pub p_relevant: f64,
}

impl ScoreResponse {
    pub fn check(&self) -> Result<()> {
        let three = self.p_essential + self.p_supplementary + self.p_not_relevant;
        let all = [
            self.p_essential,
            self.p_supplementary,
            self.p_not_relevant,
            self.p_relevant,
        ];
        if all
            .iter()
            .any(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
            || (three - 1.0).abs() > 1e-5
        {
            return Err(Error::parse(
                "score response",
                format!("probabilities out of range or not summing to 1: {self:?}"),
            ));
        }
        Ok(())
    }
}

/// Pair scorer backed by the scoring service. The score of a pair is the
/// binary head's `p_relevant`.
pub struct ScoreServiceBackend {
    id: String,
    base_url: String,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl ScoreServiceBackend {
    pub fn new(
        id: impl Into<String>,
        base_url: impl Into<String>,
        retry: RetryPolicy,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(ScoreServiceBackend {
            id: id.into(),
            base_url: base_url.into(),
            retry,
            client,
        })
    }

    pub fn score_full(&self, query: &str, sentences: &[String]) -> Result<Vec<ScoreResponse>> {
        let url = format!("{}/score", self.base_url.trim_end_matches('/'));
        let body = json!({ "query": query, "sentences": sentences });
        let records: Vec<ScoreResponse> = self.retry.run(|| {
            let resp = self
                .client
                .post(&url)
                .json(&body)
                .send()
                .map_err(|e| Failure::Retryable(format!("POST {url}: {e}")))?;
            let status = resp.status();
            let text = resp.text().map_err(|e| Failure::Retryable(e.to_string()))?;
            if status.is_server_error() {
                return Err(Failure::Retryable(format!(
                    "{url} returned {status}: {text}"
                )));
            }
            if !status.is_success() {
                return Err(Failure::Fatal(format!("{url} returned {status}: {text}")));
            }
            serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("{url}: {e}")))
        })?;
        if records.len() != sentences.len() {
            return Err(Error::parse(
                "score response",
                format!(
                    "{} records for {} sentences",
                    records.len(),
                    sentences.len()
                ),
            ));
        }
        records.iter().try_for_each(ScoreResponse::check)?;
        Ok(records)
    }
}

impl Backend for ScoreServiceBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn score_pairs(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>> {
        Ok(self
            .score_full(query, candidates)?
            .into_iter()
            .map(|r| r.p_relevant)
            .collect())
    }
}
