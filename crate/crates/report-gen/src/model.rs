//! A single chat-completion interface to external language and vision models.
//!
//! Wire format (OpenAI-compatible): `POST {endpoint}/chat/completions` with
//! `{"model", "messages": [{"role", "content": [{"type": "text", "text"} |
//! {"type": "image_url", "image_url": {"url"}}]}]}`; the reply's
//! `choices[0].message.content` is the answer. Credentials come from an
//! environment variable and are sent as a bearer token.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model request failed: {0}")]
    Transport(String),

    #[error("model endpoint answered HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("undecodable model reply: {0}")]
    Malformed(String),

    #[error("missing credentials: environment variable {0} is not set")]
    MissingKey(String),

    #[error("stub has no response left")]
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text { text: text.into() }
    }

    /// Inline image as a base64 data URL.
    pub fn image(mime: &str, bytes: &[u8]) -> Self {
        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
        ContentPart::ImageUrl {
            image_url: ImageUrl {
                url: format!("data:{mime};base64,{data}"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn user(content: Vec<ContentPart>) -> Self {
        ChatMessage {
            role: "user".into(),
            content,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: vec![ContentPart::text(text)],
        }
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageUrl { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

#[async_trait]
pub trait ModelClient: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ModelError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    /// Model used to categorize episodes from images.
    pub vision_model: String,
    /// Model used to write and summarize reports.
    pub report_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: u64,
    /// Concurrent categorization requests.
    pub max_in_flight: usize,
    /// Extra attempts when a categorization answer is not a known category.
    pub retries: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            endpoint: "https://api.openai.com/v1".into(),
            vision_model: "gpt-4.5-preview".into(),
            report_model: "o3".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 300,
            max_in_flight: 4,
            retries: 2,
        }
    }
}

pub struct HttpModelClient {
    http: reqwest::Client,
    url: String,
    key: Option<String>,
}

impl HttpModelClient {
    /// Reads the key from `config.api_key_env`; a missing key is an error.
    pub fn from_config(config: &ModelConfig) -> Result<Self, ModelError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| ModelError::MissingKey(config.api_key_env.clone()))?;
        Ok(Self::new(&config.endpoint, Some(key), Duration::from_secs(config.timeout_s)))
    }

    pub fn new(endpoint: &str, key: Option<String>, timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client configuration is static");
        HttpModelClient {
            http,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            key,
        }
    }
}

#[async_trait]
impl ModelClient for HttpModelClient {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        let mut call = self.http.post(&self.url).json(request);
        if let Some(key) = &self.key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().await.map_err(|e| ModelError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().await.map_err(|e| ModelError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ModelError::Status { status, body });
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| ModelError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ModelError::Malformed("no choices[0].message.content".into()))
    }
}

type Responder = Box<dyn Fn(&ChatRequest) -> Result<String, ModelError> + Send + Sync>;

/// Deterministic stand-in: answers from a queue or a function, and keeps
/// every request it saw.
pub struct StubModel {
    responder: Responder,
    seen: Mutex<Vec<ChatRequest>>,
}

impl StubModel {
    pub fn from_fn(f: impl Fn(&ChatRequest) -> Result<String, ModelError> + Send + Sync + 'static) -> Self {
        StubModel {
            responder: Box::new(f),
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Replies with `responses` in order, then fails with `Exhausted`.
    pub fn queue<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        let queue = Mutex::new(responses.into_iter().map(Into::into).collect::<VecDeque<String>>());
        Self::from_fn(move |_| queue.lock().unwrap().pop_front().ok_or(ModelError::Exhausted))
    }

    /// Always replies with `response`.
    pub fn constant(response: impl Into<String>) -> Self {
        let response = response.into();
        Self::from_fn(move |_| Ok(response.clone()))
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }
}

#[async_trait]
impl ModelClient for StubModel {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ModelError> {
        self.seen.lock().unwrap().push(request.clone());
        (self.responder)(request)
    }
}

/// A local chat-completion server backed by any [`ModelClient`].
pub struct StubModelServer {
    addr: SocketAddr,
    task: tokio::task::JoinHandle<()>,
}

impl StubModelServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to use as [`ModelConfig::endpoint`].
    pub fn endpoint(&self) -> String {
        format!("http://{}/v1", self.addr)
    }
}

impl Drop for StubModelServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn chat(State(model): State<Arc<dyn ModelClient>>, Json(request): Json<ChatRequest>) -> Response {
    match model.complete(&request).await {
        Ok(content) => Json(json!({
            "object": "chat.completion",
            "model": request.model,
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
        }))
        .into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

pub async fn serve_stub_model(model: Arc<dyn ModelClient>, addr: SocketAddr) -> std::io::Result<StubModelServer> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(model);
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok(StubModelServer { addr, task })
}
