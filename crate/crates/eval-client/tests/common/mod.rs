#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use arena_server::{router, Arena, ArenaConfig, EvaluatorRegistration, ManualClock, PolicyDescriptor, PolicyStatus, SqliteStore};
use policy_gateway::{serve_synthetic, SyntheticPolicySpec, SyntheticServer};

/// An in-process arena on a manual clock, fronting real synthetic policies.
pub struct Stack {
    pub arena: Arc<Arena>,
    pub clock: Arc<ManualClock>,
    pub base: String,
    pub policy_ids: Vec<String>,
    pub policies: Vec<SyntheticServer>,
    /// Everything that would identify a policy to the evaluator.
    pub secrets: Vec<String>,
    _server: tokio::task::JoinHandle<()>,
}

pub fn any_addr() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub async fn stack(skills: &[f64]) -> Stack {
    let clock = Arc::new(ManualClock::at_epoch());
    let arena = Arc::new(
        Arena::with_policy_client(Box::new(SqliteStore::in_memory().unwrap()), clock.clone(), ArenaConfig::default())
            .unwrap(),
    );
    let (mut policies, mut policy_ids, mut secrets) = (Vec::new(), Vec::new(), Vec::new());
    for (k, &skill) in skills.iter().enumerate() {
        let server = serve_synthetic(SyntheticPolicySpec::new(format!("p{k}"), skill).with_seed(k as u64), any_addr())
            .await
            .unwrap();
        let name = format!("Lab Policy {k}");
        let entry = arena
            .register_policy(PolicyDescriptor {
                display_name: name.clone(),
                endpoint: server.endpoint(),
                open_source: true,
                owner: "lab".into(),
            })
            .await
            .unwrap();
        arena.set_policy_status(&entry.policy_id, PolicyStatus::Active).unwrap();
        secrets.extend([entry.policy_id.clone(), name, server.endpoint(), server.addr().to_string()]);
        policy_ids.push(entry.policy_id);
        policies.push(server);
    }
    arena
        .register_evaluator(EvaluatorRegistration {
            evaluator_id: "eve".into(),
            sponsored_base: None,
        })
        .unwrap();
    let listener = tokio::net::TcpListener::bind(any_addr()).await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let app = router(arena.clone());
    let server = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Stack {
        arena,
        clock,
        base,
        policy_ids,
        policies,
        secrets,
        _server: server,
    }
}

/// A port with nothing listening on it.
pub fn closed_server() -> String {
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    format!("http://{addr}")
}
