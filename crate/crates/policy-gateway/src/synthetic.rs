//! Reference policy servers with a tunable level of competence.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::client::GatewayError;
use crate::protocol::{fnv1a, target_direction, ActionChunk, Observation, ACTION_DIM};

/// Steps per action chunk returned by synthetic servers.
pub const CHUNK_HORIZON: usize = 4;

/// How a synthetic server answers, for exercising the error paths of clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    Conforming,
    /// Actions with one dimension too few.
    WrongDimension,
    /// A body that is not an action chunk.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPolicySpec {
    pub policy_id: String,
    /// Cosine between each action and the task direction, in `[0, 1]`.
    pub skill: f64,
    pub latency_ms: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub behavior: Behavior,
}

impl SyntheticPolicySpec {
    pub fn new(policy_id: impl Into<String>, skill: f64) -> Self {
        SyntheticPolicySpec {
            policy_id: policy_id.into(),
            skill,
            latency_ms: 0,
            seed: 0,
            behavior: Behavior::Conforming,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_latency(mut self, latency_ms: u64) -> Self {
        self.latency_ms = latency_ms;
        self
    }

    pub fn with_behavior(mut self, behavior: Behavior) -> Self {
        self.behavior = behavior;
        self
    }
}

/// The chunk a synthetic policy returns for `obs`.
///
/// Each action is `skill * target + sqrt(1 - skill^2) * noise`, with `noise` a
/// unit vector orthogonal to the target, so its cosine with the target equals
/// `skill` exactly. Pure in `(spec, obs)`.
pub fn synthetic_chunk(spec: &SyntheticPolicySpec, obs: &Observation) -> ActionChunk {
    let skill = spec.skill.clamp(0.0, 1.0);
    let spread = (1.0 - skill * skill).sqrt();
    let actions = (0..CHUNK_HORIZON as u64)
        .map(|k| {
            let step = obs.timestep + k;
            let target = target_direction(&obs.instruction, step);
            let seed = fnv1a(&[&spec.seed.to_le_bytes(), obs.instruction.as_bytes(), &step.to_le_bytes()]);
            let noise = orthogonal_unit(&target, &mut ChaCha8Rng::seed_from_u64(seed));
            (0..ACTION_DIM).map(|d| skill * target[d] + spread * noise[d]).collect()
        })
        .collect();
    ActionChunk::new(actions)
}

fn orthogonal_unit(unit: &[f64; ACTION_DIM], rng: &mut ChaCha8Rng) -> [f64; ACTION_DIM] {
    loop {
        let mut v = [0.0; ACTION_DIM];
        for x in v.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        let dot: f64 = v.iter().zip(unit).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(unit).for_each(|(a, b)| *a -= dot * b);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

async fn act(State(spec): State<Arc<SyntheticPolicySpec>>, Json(obs): Json<Observation>) -> Response {
    if spec.latency_ms > 0 {
        tokio::time::sleep(Duration::from_millis(spec.latency_ms)).await;
    }
    if let Err(problems) = obs.validate() {
        return (StatusCode::UNPROCESSABLE_ENTITY, problems.join("; ")).into_response();
    }
    match spec.behavior {
        Behavior::Conforming => Json(synthetic_chunk(&spec, &obs)).into_response(),
        Behavior::WrongDimension => {
            let mut chunk = synthetic_chunk(&spec, &obs);
            chunk.actions.iter_mut().for_each(|a| {
                a.pop();
            });
            Json(chunk).into_response()
        }
        Behavior::Malformed => (StatusCode::OK, [("content-type", "application/json")], "{\"actions\": \"nope\"").into_response(),
    }
}

pub fn router(spec: SyntheticPolicySpec) -> Router {
    Router::new()
        .route("/act", post(act))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(Arc::new(spec))
}

/// A running synthetic policy server.
#[derive(Debug)]
pub struct SyntheticServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl SyntheticServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to hand to [`crate::PolicyClient`].
    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and closes open ones.
    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if tokio::time::timeout(Duration::from_millis(500), &mut self.task).await.is_err() {
            self.task.abort();
        }
    }
}

impl Drop for SyntheticServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `spec` in the background.
pub async fn serve_synthetic(spec: SyntheticPolicySpec, addr: SocketAddr) -> Result<SyntheticServer, GatewayError> {
    let listener = TcpListener::bind(addr).await.map_err(|e| GatewayError::Bind {
        addr: addr.to_string(),
        message: e.to_string(),
    })?;
    let local = listener.local_addr().map_err(|e| GatewayError::Bind {
        addr: addr.to_string(),
        message: e.to_string(),
    })?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(spec);
    let task = tokio::spawn(async move {
        let served = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
        if let Err(err) = served {
            tracing::warn!(%err, "synthetic policy server stopped with error");
        }
    });
    Ok(SyntheticServer {
        addr: local,
        shutdown: Some(tx),
        task,
    })
}
