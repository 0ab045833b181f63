use policy_gateway::{ActionChunk, GatewayError, Observation, PolicyClient};
use serde::{Deserialize, Serialize};
use sim_harness::SyntheticEnv;

/// Something that produces observations and executes action chunks.
pub trait Stepper {
    fn observe(&self) -> Observation;
    fn apply(&mut self, chunk: &ActionChunk);
    /// Task progress in `[0, 1]` reached so far.
    fn progress(&mut self) -> f64;
}

impl Stepper for SyntheticEnv {
    fn observe(&self) -> Observation {
        SyntheticEnv::observe(self)
    }

    fn apply(&mut self, chunk: &ActionChunk) {
        SyntheticEnv::apply(self, chunk)
    }

    fn progress(&mut self) -> f64 {
        SyntheticEnv::progress(self)
    }
}

/// Why a rollout stopped before `max_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Abort {
    /// The policy missed the per-call deadline.
    Deadline,
    /// The server closed the session (HTTP 410).
    SessionClosed,
    /// The policy answered but the reply was unusable.
    PolicyFailure(String),
    /// The server could not be reached.
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub endpoint: String,
    pub instruction: String,
    pub observations: Vec<Observation>,
    pub actions: Vec<ActionChunk>,
    pub step_count: usize,
    pub aborted: Option<Abort>,
}

impl Trace {
    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }
}

fn classify(err: GatewayError) -> Abort {
    match err {
        GatewayError::Timeout(_) => Abort::Deadline,
        GatewayError::Status(410) => Abort::SessionClosed,
        GatewayError::Unreachable(m) | GatewayError::Transport(m) => Abort::Transport(m),
        other => Abort::PolicyFailure(other.to_string()),
    }
}

/// Loops observe → act → apply for at most `max_steps` calls. A failed call
/// ends the rollout early; whatever ran before it is kept.
pub async fn rollout(
    client: &PolicyClient,
    endpoint: &str,
    env: &mut dyn Stepper,
    max_steps: usize,
) -> Trace {
    let mut trace = Trace {
        endpoint: endpoint.to_string(),
        instruction: env.observe().instruction,
        observations: Vec::new(),
        actions: Vec::new(),
        step_count: 0,
        aborted: None,
    };
    for _ in 0..max_steps {
        let obs = env.observe();
        match client.act(endpoint, &obs).await {
            Ok(chunk) => {
                env.apply(&chunk);
                trace.observations.push(obs);
                trace.actions.push(chunk);
                trace.step_count += 1;
            }
            Err(e) => {
                trace.aborted = Some(classify(e));
                break;
            }
        }
    }
    trace
}
