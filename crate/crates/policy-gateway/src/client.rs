use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{canonical_observation, ActionChunk, Observation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("no response within {0:?}")]
    Timeout(Duration),

    #[error("endpoint unreachable: {0}")]
    Unreachable(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("endpoint answered HTTP {0}")]
    Status(u16),

    #[error("malformed response: {0}")]
    Malformed(String),

    #[error("response violates the action schema: {}", .0.join("; "))]
    Schema(Vec<String>),

    #[error("invalid endpoint {0:?}")]
    InvalidEndpoint(String),

    #[error("failed to bind {addr}: {message}")]
    Bind { addr: String, message: String },
}

/// Checks that `endpoint` is an absolute http(s) URL with a host and returns
/// it without a trailing slash.
pub fn normalize_endpoint(endpoint: &str) -> Result<String, GatewayError> {
    let url = reqwest::Url::parse(endpoint).map_err(|_| GatewayError::InvalidEndpoint(endpoint.to_string()))?;
    if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
        return Err(GatewayError::InvalidEndpoint(endpoint.to_string()));
    }
    Ok(endpoint.trim_end_matches('/').to_string())
}

/// Outcome of a conformance probe against a reachable endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub schema_ok: bool,
    pub latency_ms: u64,
    pub violations: Vec<String>,
}

/// HTTP client for policy servers. Cheap to clone; safe to share.
#[derive(Debug, Clone)]
pub struct PolicyClient {
    http: reqwest::Client,
    deadline: Duration,
}

impl PolicyClient {
    pub fn new(deadline: Duration) -> Self {
        let http = reqwest::Client::builder()
            .connect_timeout(deadline)
            .timeout(deadline)
            .build()
            .expect("reqwest client without TLS always builds");
        PolicyClient { http, deadline }
    }

    pub fn deadline(&self) -> Duration {
        self.deadline
    }

    /// Runs `POST {endpoint}/act` and returns the decoded but unvalidated chunk.
    async fn act_unchecked(&self, endpoint: &str, obs: &Observation) -> Result<ActionChunk, GatewayError> {
        let url = format!("{}/act", normalize_endpoint(endpoint)?);
        let call = async {
            let resp = self.http.post(&url).json(obs).send().await.map_err(|e| self.classify(e))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(GatewayError::Status(status.as_u16()));
            }
            let body = resp.bytes().await.map_err(|e| self.classify(e))?;
            serde_json::from_slice::<ActionChunk>(&body).map_err(|e| GatewayError::Malformed(e.to_string()))
        };
        // reqwest's own timeout covers the request; this bounds everything else.
        match tokio::time::timeout(self.deadline, call).await {
            Ok(result) => result,
            Err(_) => Err(GatewayError::Timeout(self.deadline)),
        }
    }

    /// Requests one action chunk, enforcing the deadline and the schema.
    pub async fn act(&self, endpoint: &str, obs: &Observation) -> Result<ActionChunk, GatewayError> {
        let chunk = self.act_unchecked(endpoint, obs).await?;
        let problems = chunk.violations();
        if problems.is_empty() {
            Ok(chunk)
        } else {
            Err(GatewayError::Schema(problems))
        }
    }

    pub async fn healthz(&self, endpoint: &str) -> Result<(), GatewayError> {
        let url = format!("{}/healthz", normalize_endpoint(endpoint)?);
        let resp = self.http.get(&url).send().await.map_err(|e| self.classify(e))?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(GatewayError::Status(resp.status().as_u16()))
        }
    }

    /// Sends the canonical observation and checks the reply against the schema.
    ///
    /// Schema problems are reported in the result; transport failures,
    /// timeouts and undecodable bodies are errors.
    pub async fn probe_conformance(&self, endpoint: &str) -> Result<ConformanceReport, GatewayError> {
        let started = Instant::now();
        let chunk = self.act_unchecked(endpoint, &canonical_observation()).await?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let violations = chunk.violations();
        Ok(ConformanceReport {
            schema_ok: violations.is_empty(),
            latency_ms,
            violations,
        })
    }

    fn classify(&self, err: reqwest::Error) -> GatewayError {
        if err.is_timeout() {
            GatewayError::Timeout(self.deadline)
        } else if err.is_connect() {
            GatewayError::Unreachable(err.to_string())
        } else if err.is_decode() {
            GatewayError::Malformed(err.to_string())
        } else {
            GatewayError::Transport(err.to_string())
        }
    }
}
