//! Client for an external embedding service.
//!
//! Wire protocol: `POST {endpoint}/v1/embed` with body
//! `{"items":[{"id":..,"text":..}]}`; the reply is
//! `{"items":[{"id":..,"vector":[..]}]}`. Replies are matched to requests by
//! id, so the service may answer in any order.

use std::collections::HashMap;
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingRecord;

pub const EMBED_PATH: &str = "/v1/embed";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedRequest {
    pub items: Vec<EmbedItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedVector {
    pub id: String,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbedResponse {
    pub items: Vec<EmbedVector>,
}

/// Settings read from the `embedding.*` config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub dim: usize,
    /// Retries after the first attempt of each batch.
    pub retries: u32,
    /// Delay before the first retry; doubled on every further retry.
    pub backoff: Duration,
    pub batch_size: usize,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            dim,
            retries: 3,
            backoff: Duration::from_millis(200),
            batch_size: 32,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: connection failures, timeouts, 429 and 5xx replies.
    #[error("transient: {0}")]
    Transient(String),
    #[error("permanent: {0}")]
    Permanent(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RemoteError {
    #[error("{ids} ids but {texts} texts and {labels} labels")]
    LengthMismatch { ids: usize, texts: usize, labels: usize },
    #[error("service failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("service error: {0}")]
    Permanent(String),
    #[error("record {id}: service returned width {found}, configured {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("record {id}: non-finite value in service reply")]
    NonFinite { id: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Sends one batch and returns the service's vectors.
pub trait EmbeddingTransport {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, TransportError>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: &RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { url: format!("{}{EMBED_PATH}", config.endpoint.trim_end_matches('/')), agent }
    }
}

impl EmbeddingTransport for HttpTransport {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, TransportError> {
        let body = serde_json::to_string(request).map_err(|e| TransportError::Permanent(e.to_string()))?;
        let result = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body.as_bytes());
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                return Err(TransportError::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => return Err(TransportError::Permanent(format!("HTTP {code}"))),
            Err(e) => return Err(TransportError::Transient(e.to_string())),
        };
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| TransportError::Permanent(format!("malformed reply: {e}")))
    }
}

/// Fetches one record per id over HTTP. See [`fetch_with`].
pub fn fetch_remote(
    config: &RemoteConfig,
    ids: &[String],
    texts: &[String],
    labels: &[usize],
) -> Result<Vec<EmbeddingRecord>, RemoteError> {
    fetch_with(&HttpTransport::new(config), config, ids, texts, labels)
}

/// Fetches pooled records in request order. Each batch is retried on
/// transient failures with exponential backoff. Nothing is returned unless
/// every batch succeeds and validates.
pub fn fetch_with<T: EmbeddingTransport + ?Sized>(
    transport: &T,
    config: &RemoteConfig,
    ids: &[String],
    texts: &[String],
    labels: &[usize],
) -> Result<Vec<EmbeddingRecord>, RemoteError> {
    if ids.len() != texts.len() || ids.len() != labels.len() {
        return Err(RemoteError::LengthMismatch { ids: ids.len(), texts: texts.len(), labels: labels.len() });
    }
    let batch_size = config.batch_size.max(1);
    let mut records = Vec::with_capacity(ids.len());
    for start in (0..ids.len()).step_by(batch_size) {
        let end = (start + batch_size).min(ids.len());
        let request = EmbedRequest {
            items: ids[start..end]
                .iter()
                .zip(&texts[start..end])
                .map(|(id, text)| EmbedItem { id: id.clone(), text: text.clone() })
                .collect(),
        };
        let response = send_with_retries(transport, config, &request)?;
        records.extend(match_response(config, &request, response, &labels[start..end])?);
    }
    Ok(records)
}

fn send_with_retries<T: EmbeddingTransport + ?Sized>(
    transport: &T,
    config: &RemoteConfig,
    request: &EmbedRequest,
) -> Result<EmbedResponse, RemoteError> {
    let mut delay = config.backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match transport.embed(request) {
            Ok(response) => return Ok(response),
            Err(TransportError::Permanent(msg)) => return Err(RemoteError::Permanent(msg)),
            Err(TransportError::Transient(msg)) => {
                if attempt > config.retries {
                    return Err(RemoteError::Exhausted { attempts: attempt, last: msg });
                }
                warn!("embedding service attempt {attempt} failed ({msg}); retrying in {delay:?}");
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
        }
    }
}

fn match_response(
    config: &RemoteConfig,
    request: &EmbedRequest,
    response: EmbedResponse,
    labels: &[usize],
) -> Result<Vec<EmbeddingRecord>, RemoteError> {
    if response.items.len() != request.items.len() {
        return Err(RemoteError::Protocol(format!(
            "asked for {} vectors, got {}",
            request.items.len(),
            response.items.len()
        )));
    }
    let mut by_id: HashMap<String, Vec<f32>> = HashMap::with_capacity(response.items.len());
    for item in response.items {
        if by_id.insert(item.id.clone(), item.vector).is_some() {
            return Err(RemoteError::Protocol(format!("duplicate id {} in reply", item.id)));
        }
    }
    request
        .items
        .iter()
        .zip(labels)
        .map(|(item, &label)| {
            let vector = by_id
                .remove(&item.id)
                .ok_or_else(|| RemoteError::Protocol(format!("reply lacks id {}", item.id)))?;
            if vector.len() != config.dim {
                return Err(RemoteError::DimensionMismatch { id: item.id.clone(), expected: config.dim, found: vector.len() });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(RemoteError::NonFinite { id: item.id.clone() });
            }
            Ok(EmbeddingRecord::pooled(item.id.clone(), label, vector))
        })
        .collect()
}
