//! The HTTP surface, exercised against real synthetic policy servers.

use std::net::SocketAddr;
use std::sync::Arc;

use arena_server::{router, Arena, ArenaConfig, SqliteStore, SystemClock};
use policy_gateway::{serve_synthetic, Behavior, Observation, SyntheticPolicySpec, SyntheticServer};
use serde_json::{json, Value};

struct Harness {
    base: String,
    http: reqwest::Client,
    policies: Vec<SyntheticServer>,
    _server: tokio::task::JoinHandle<()>,
}

async fn harness() -> Harness {
    let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let mut policies = Vec::new();
    for (k, skill) in [0.3, 0.6, 0.9].into_iter().enumerate() {
        policies.push(serve_synthetic(SyntheticPolicySpec::new(format!("p{k}"), skill).with_seed(k as u64), any).await.unwrap());
    }
    let arena = Arena::with_policy_client(
        Box::new(SqliteStore::in_memory().unwrap()),
        Arc::new(SystemClock),
        ArenaConfig::default(),
    )
    .unwrap();
    let listener = tokio::net::TcpListener::bind(any).await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let app = router(Arc::new(arena));
    let server = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Harness {
        base,
        http: reqwest::Client::new(),
        policies,
        _server: server,
    }
}

impl Harness {
    async fn post(&self, path: &str, body: Value) -> (u16, Value, String) {
        let resp = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null), text)
    }

    async fn get(&self, path: &str) -> (u16, String) {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (resp.status().as_u16(), resp.text().await.unwrap())
    }

    async fn patch(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.http.patch(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        (resp.status().as_u16(), resp.json().await.unwrap())
    }
}

fn code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap_or("")
}

#[tokio::test]
async fn full_session_flow_over_http() {
    let h = harness().await;
    let mut ids = Vec::new();
    let mut secrets = Vec::new();
    for (k, p) in h.policies.iter().enumerate() {
        let name = format!("Secret Policy {k}");
        let (status, entry, _) = h
            .post("/policies", json!({"display_name": name, "endpoint": p.endpoint(), "open_source": k == 0, "owner": "lab"}))
            .await;
        assert_eq!(status, 201, "{entry}");
        assert_eq!(entry["status"], "pending_safety");
        let id = entry["policy_id"].as_str().unwrap().to_string();
        let (status, updated) = h.patch(&format!("/policies/{id}/status"), json!({"status": "active"})).await;
        assert_eq!((status, updated["status"].as_str()), (200, Some("active")));
        secrets.extend([id.clone(), name, p.endpoint(), p.addr().to_string()]);
        ids.push(id);
    }
    let (status, _) = h.patch("/policies/nope/status", json!({"status": "active"})).await;
    assert_eq!(status, 404);

    let (status, _, _) = h.post("/sessions", json!({"evaluator_id": "eve"})).await;
    assert_eq!(status, 404);
    let (status, acct, _) = h.post("/evaluators", json!({"evaluator_id": "eve"})).await;
    assert_eq!((status, acct["balance"].as_i64()), (200, Some(0)));

    let (status, view, raw_view) = h.post("/sessions", json!({"evaluator_id": "eve"})).await;
    assert_eq!(status, 201, "{raw_view}");
    let session_id = view["session_id"].as_str().unwrap().to_string();
    assert!(uuid::Uuid::parse_str(&session_id).is_ok());
    let (status, raw_get) = h.get(&format!("/sessions/{session_id}")).await;
    assert_eq!(status, 200);

    let endpoint_a = view["endpoint_a"].as_str().unwrap();
    let obs = Observation::new("put the lid on the pot", 0);
    let (status, chunk, raw_chunk) = h.post(&format!("{endpoint_a}/act"), serde_json::to_value(&obs).unwrap()).await;
    assert_eq!(status, 200, "{raw_chunk}");
    assert_eq!(chunk["actions"].as_array().unwrap().len(), 4);

    let feedback = json!({
        "instruction": "put the lid on the pot",
        "progress_a": 150, "progress_b": 20, "preference": "A",
        "explanation": "A placed the lid", "media_refs": []
    });
    let (status, err, raw_err) = h.post(&format!("/sessions/{session_id}/feedback"), feedback.clone()).await;
    assert_eq!((status, code(&err)), (422, "validation"));
    let (status, err, _) = h.post(&format!("/sessions/{session_id}/feedback"), json!({"progress_a": "x"})).await;
    assert_eq!((status, code(&err)), (422, "validation"));

    for body in [&raw_view, &raw_get, &raw_chunk, &raw_err] {
        for s in &secrets {
            assert!(!body.contains(s.as_str()), "{s} leaked in {body}");
        }
    }

    let mut ok = feedback.clone();
    ok["progress_a"] = json!(90);
    let (status, ack, _) = h.post(&format!("/sessions/{session_id}/feedback"), ok.clone()).await;
    assert_eq!(status, 200);
    assert_eq!((ack["earned"].as_i64(), ack["balance"].as_i64()), (Some(1), Some(1)));
    let (status, err, _) = h.post(&format!("/sessions/{session_id}/feedback"), ok).await;
    assert_eq!((status, code(&err)), (409, "session_completed"));
    let (status, err, _) = h.post(&format!("{endpoint_a}/act"), serde_json::to_value(&obs).unwrap()).await;
    assert_eq!((status, code(&err)), (409, "session_completed"));

    let (status, board) = h.get("/leaderboard?method=bt&filter=all").await;
    assert_eq!(status, 200, "{board}");
    let board: Value = serde_json::from_str(&board).unwrap();
    assert_eq!(board["record_count"], 1);
    assert_eq!(board["entries"].as_array().unwrap().len(), 2);
    let (status, body) = h.get("/leaderboard?method=nonsense").await;
    assert_eq!(status, 422, "{body}");

    let (status, csv) = h.get("/export").await;
    assert_eq!(status, 200);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.contains(&session_id));
    let (status, side) = h.get("/export/sidecar?from=1").await;
    assert_eq!(status, 200);
    assert!(side.contains("A placed the lid"));

    let (status, cancelled, _) = h.post("/admin/cancel-expired", json!({})).await;
    assert_eq!((status, cancelled["cancelled"].as_array().map(Vec::len)), (200, Some(0)));
    let (status, acct) = h.get("/evaluators/eve").await;
    assert_eq!(status, 200);
    assert!(acct.contains("\"earned\":1"));
}

#[tokio::test]
async fn registration_errors_are_distinguishable() {
    let h = harness().await;
    let bad = serve_synthetic(
        SyntheticPolicySpec::new("bad", 0.5).with_behavior(Behavior::WrongDimension),
        "127.0.0.1:0".parse().unwrap(),
    )
    .await
    .unwrap();
    let (status, err, _) = h
        .post("/policies", json!({"display_name": "Bad", "endpoint": bad.endpoint(), "owner": "lab"}))
        .await;
    assert_eq!((status, code(&err)), (422, "schema_nonconformance"));

    // Bind and drop to find a port nobody listens on.
    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let (status, err, _) = h
        .post("/policies", json!({"display_name": "Gone", "endpoint": format!("http://{closed}"), "owner": "lab"}))
        .await;
    assert_eq!((status, code(&err)), (422, "endpoint_unreachable"));

    let (status, err, _) = h
        .post("/policies", json!({"display_name": "Bad", "endpoint": "ftp://x", "owner": "lab"}))
        .await;
    assert_eq!((status, code(&err)), (400, "invalid_endpoint"));

    let (status, list) = h.get("/policies").await;
    assert_eq!((status, list.as_str()), (200, "[]"));
}

#[tokio::test]
async fn leaderboard_on_empty_store_is_insufficient_data() {
    let h = harness().await;
    let (status, body) = h.get("/leaderboard").await;
    assert_eq!(status, 409);
    assert!(body.contains("insufficient_data"));
    let (status, csv) = h.get("/export").await;
    assert_eq!((status, csv.lines().count()), (200, 1));
}
