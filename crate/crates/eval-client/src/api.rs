use std::time::Duration;

use arena_server::{CreditView, FeedbackAck, FeedbackSubmission, SessionRequest, SessionView};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::ClientError;

/// The evaluator-facing slice of the arena HTTP API.
#[derive(Debug, Clone)]
pub struct ArenaClient {
    base: String,
    http: reqwest::Client,
}

impl ArenaClient {
    pub fn new(server: &str, timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .connect_timeout(timeout)
            .timeout(timeout)
            .build()
            .expect("reqwest client without TLS always builds");
        ArenaClient {
            base: server.trim_end_matches('/').to_string(),
            http,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    /// Absolute URL for a server-relative path such as an anonymized endpoint.
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn request_session(&self, evaluator_id: &str, own_policy: Option<&str>) -> Result<SessionView, ClientError> {
        let body = SessionRequest {
            evaluator_id: evaluator_id.to_string(),
            policy_id: own_policy.map(str::to_string),
        };
        self.send(self.http.post(self.url("/sessions")).json(&body)).await
    }

    pub async fn session(&self, session_id: &str) -> Result<SessionView, ClientError> {
        self.send(self.http.get(self.url(&format!("/sessions/{session_id}")))).await
    }

    pub async fn submit_feedback(&self, session_id: &str, feedback: &FeedbackSubmission) -> Result<FeedbackAck, ClientError> {
        self.post(&format!("/sessions/{session_id}/feedback"), feedback).await
    }

    pub async fn credits(&self, evaluator_id: &str) -> Result<CreditView, ClientError> {
        self.send(self.http.get(self.url(&format!("/evaluators/{evaluator_id}")))).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        self.send(self.http.post(self.url(path)).json(body)).await
    }

    async fn send<T: DeserializeOwned>(&self, request: reqwest::RequestBuilder) -> Result<T, ClientError> {
        let resp = request.send().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&text).map_err(|e| ClientError::Transport(format!("undecodable reply: {e}")));
        }
        let body: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
        let code = body["error"]["code"].as_str().unwrap_or("unknown").to_string();
        let message = body["error"]["message"].as_str().unwrap_or(&text).to_string();
        Err(match (status, code.as_str()) {
            (410, _) => ClientError::Expired(message),
            (_, "validation") => ClientError::Validation(vec![message]),
            _ => ClientError::Server { status, code, message },
        })
    }
}
