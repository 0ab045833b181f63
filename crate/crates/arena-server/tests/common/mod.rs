#![allow(dead_code)]

use std::sync::Arc;

use arena_server::{Arena, ArenaConfig, EvaluatorRegistration, ManualClock, PolicyBackend, PolicyDescriptor, PolicyStatus, SqliteStore};
use async_trait::async_trait;
use policy_gateway::{synthetic_chunk, ActionChunk, ConformanceReport, GatewayError, Observation, SyntheticPolicySpec};

/// Endpoints containing `bad-schema` fail the probe's schema check, ones
/// containing `down` are unreachable, and ones containing `flaky` pass the
/// probe but refuse later calls; everything else conforms.
pub struct StubBackend;

#[async_trait]
impl PolicyBackend for StubBackend {
    async fn probe(&self, endpoint: &str) -> Result<ConformanceReport, GatewayError> {
        if endpoint.contains("down") {
            Err(GatewayError::Unreachable("connection refused".into()))
        } else if endpoint.contains("bad-schema") {
            Ok(ConformanceReport {
                schema_ok: false,
                latency_ms: 1,
                violations: vec!["action 0 has 7 dimensions, expected 8".into()],
            })
        } else {
            Ok(ConformanceReport {
                schema_ok: true,
                latency_ms: 1,
                violations: vec![],
            })
        }
    }

    async fn act(&self, endpoint: &str, obs: &Observation) -> Result<ActionChunk, GatewayError> {
        if endpoint.contains("down") || endpoint.contains("flaky") {
            return Err(GatewayError::Unreachable(format!("{endpoint} refused")));
        }
        Ok(synthetic_chunk(&SyntheticPolicySpec::new("stub", 0.5), obs))
    }
}

pub struct Fixture {
    pub arena: Arena,
    pub clock: Arc<ManualClock>,
}

pub fn fixture_with(config: ArenaConfig) -> Fixture {
    let clock = Arc::new(ManualClock::at_epoch());
    let store = SqliteStore::in_memory().unwrap();
    let arena = Arena::new(Box::new(store), clock.clone(), Arc::new(StubBackend), config).unwrap();
    Fixture { arena, clock }
}

pub fn fixture() -> Fixture {
    fixture_with(ArenaConfig::default())
}

pub fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap().block_on(f)
}

pub fn descriptor(name: &str, owner: &str, open_source: bool) -> PolicyDescriptor {
    PolicyDescriptor {
        display_name: name.to_string(),
        endpoint: format!("http://{}.policies.test:9000", name.to_lowercase()),
        open_source,
        owner: owner.to_string(),
    }
}

/// Registers and activates `n` policies named `Policy0..`, owned by `owner`.
pub fn active_policies(arena: &Arena, n: usize, owner: &str) -> Vec<String> {
    (0..n)
        .map(|k| {
            let entry = block_on(arena.register_policy(descriptor(&format!("Policy{k}"), owner, k % 2 == 0))).unwrap();
            arena.set_policy_status(&entry.policy_id, PolicyStatus::Active).unwrap();
            entry.policy_id
        })
        .collect()
}

pub fn evaluator(arena: &Arena, id: &str, base: i64) {
    arena
        .register_evaluator(EvaluatorRegistration {
            evaluator_id: id.to_string(),
            sponsored_base: Some(base),
        })
        .unwrap();
}

pub fn feedback(pref: arena_server::Preference, a: i64, b: i64) -> arena_server::FeedbackSubmission {
    arena_server::FeedbackSubmission {
        instruction: "put the cup in the sink".into(),
        progress_a: a,
        progress_b: b,
        preference: pref,
        explanation: "A grasped the cup; B missed it twice.".into(),
        media_refs: vec!["media/ep-1.mp4".into()],
    }
}
