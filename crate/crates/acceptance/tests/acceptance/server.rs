//! P8–P9: the arena service on its own and wired to clients and policies.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Barrier};
use std::time::Duration as StdDuration;

use acceptance::{ensure, CheckResult};
use arena_server::{
    router, Arena, ArenaConfig, EvaluatorRegistration, ExportRange, FeedbackSubmission, LeaderboardSnapshot, ManualClock,
    PolicyBackend, PolicyDescriptor, PolicyStatus, Preference, SessionState, SqliteStore,
};
use async_trait::async_trait;
use chrono::Duration;
use eval_client::{run_session, InputMode, SessionScript};
use policy_gateway::{
    serve_synthetic, synthetic_chunk, ActionChunk, ConformanceReport, GatewayError, Observation, SyntheticPolicySpec,
    SyntheticServer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ranking_core::{io::read_csv, rank, rank_from_scores, LabeledDataset, RankingConfig, RankingMethod};
use serde_json::{json, Value};
use sim_harness::sample_world;

fn any_addr() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap()
}

/// Accepts every endpoint and answers with a fixed synthetic policy.
struct StubBackend;

#[async_trait]
impl PolicyBackend for StubBackend {
    async fn probe(&self, _endpoint: &str) -> Result<ConformanceReport, GatewayError> {
        Ok(ConformanceReport {
            schema_ok: true,
            latency_ms: 1,
            violations: vec![],
        })
    }

    async fn act(&self, _endpoint: &str, obs: &Observation) -> Result<ActionChunk, GatewayError> {
        Ok(synthetic_chunk(&SyntheticPolicySpec::new("stub", 0.5), obs))
    }
}

fn stub_arena(max_open_sessions: usize) -> (Arc<Arena>, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::at_epoch());
    let config = ArenaConfig {
        max_open_sessions,
        ..ArenaConfig::default()
    };
    let arena = Arena::new(Box::new(SqliteStore::in_memory().unwrap()), clock.clone(), Arc::new(StubBackend), config).unwrap();
    (Arc::new(arena), clock)
}

fn add_evaluator(arena: &Arena, id: &str, base: i64) {
    arena
        .register_evaluator(EvaluatorRegistration {
            evaluator_id: id.into(),
            sponsored_base: Some(base),
        })
        .unwrap();
}

fn add_policies(arena: &Arena, rt: &tokio::runtime::Runtime, n: usize, owner: &str) -> Vec<String> {
    (0..n)
        .map(|k| {
            let descriptor = PolicyDescriptor {
                display_name: format!("{owner} model {k}"),
                endpoint: format!("http://{owner}-{k}.robots.test:8000"),
                open_source: k % 2 == 1,
                owner: owner.into(),
            };
            let entry = rt.block_on(arena.register_policy(descriptor)).unwrap();
            arena.set_policy_status(&entry.policy_id, PolicyStatus::Active).unwrap();
            entry.policy_id
        })
        .collect()
}

fn feedback(preference: Preference, a: i64, b: i64) -> FeedbackSubmission {
    FeedbackSubmission {
        instruction: "place the apple in the bowl".into(),
        progress_a: a,
        progress_b: b,
        preference,
        explanation: "one arm reached the apple, the other hovered".into(),
        media_refs: vec![],
    }
}

// ---------------------------------------------------------------- P8

fn uniformity(rt: &tokio::runtime::Runtime) -> CheckResult {
    let (arena, _) = stub_arena(usize::MAX);
    add_evaluator(&arena, "ada", 0);
    let ids = add_policies(&arena, rt, 7, "lab");
    let draws = 10_000usize;
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for _ in 0..draws {
        let view = arena.request_session("ada", None).unwrap();
        let s = arena.session(&view.session_id).unwrap();
        let a = ids.iter().position(|p| *p == s.policy_a).unwrap();
        let b = ids.iter().position(|p| *p == s.policy_b).unwrap();
        ensure(a != b, || "self-pairing".into())?;
        *counts.entry((a.min(b), a.max(b))).or_default() += 1;
    }
    let pairs = 21.0;
    ensure(counts.len() == 21, || format!("{} of 21 pairs drawn", counts.len()))?;
    let expected = draws as f64 / pairs;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 20 degrees of freedom: mean 20, variance 40.
    let bound = 20.0 + 3.0 * 40f64.sqrt();
    ensure(chi2 <= bound, || format!("chi-square {chi2:.1} > {bound:.1}"))?;
    let sigma = (draws as f64 * (1.0 / pairs) * (1.0 - 1.0 / pairs)).sqrt();
    let worst = counts.values().map(|&c| (c as f64 - expected).abs() / sigma).fold(0.0, f64::max);
    ensure(worst <= 3.0, || format!("a pair deviates by {worst:.2} sigma"))?;
    Ok(format!("chi2 {chi2:.1} <= {bound:.1}, worst pair {worst:.2} sigma"))
}

fn conservation(rt: &tokio::runtime::Runtime) -> CheckResult {
    let (arena, clock) = stub_arena(4);
    let evaluators = ["e0", "e1", "e2"];
    let mut owned = Vec::new();
    for (k, e) in evaluators.iter().enumerate() {
        add_evaluator(&arena, e, k as i64);
        owned.push(add_policies(&arena, rt, 1, e).remove(0));
    }
    add_policies(&arena, rt, 3, "lab");
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut open, mut sessions) = (Vec::<String>::new(), Vec::<String>::new());
    let mut previous: HashMap<&str, (i64, i64)> = HashMap::new();
    for step in 0..1000 {
        let who = rng.random_range(0..evaluators.len());
        match rng.random_range(0..10) {
            0..=3 => {
                if let Ok(v) = arena.request_session(evaluators[who], None) {
                    open.push(v.session_id.clone());
                    sessions.push(v.session_id);
                }
            }
            4 | 5 => {
                if let Ok(v) = arena.request_session(evaluators[who], Some(&owned[who])) {
                    open.push(v.session_id.clone());
                    sessions.push(v.session_id);
                }
            }
            6 | 7 if !open.is_empty() => {
                let id = open.swap_remove(rng.random_range(0..open.len()));
                let _ = arena.submit_feedback(&id, &feedback(Preference::Tie, 50, 50));
            }
            8 => clock.advance(Duration::minutes(rng.random_range(1..8))),
            _ => {
                arena.cancel_expired_sessions().unwrap();
            }
        }
        // Ground truth from the session table.
        let mut completed: HashMap<String, i64> = HashMap::new();
        let mut bought: HashMap<String, i64> = HashMap::new();
        for id in &sessions {
            let s = arena.session(id).unwrap();
            if s.state == SessionState::Completed {
                *completed.entry(s.evaluator_id.clone()).or_default() += 1;
            }
            if s.own_policy.is_some() {
                *bought.entry(s.evaluator_id).or_default() += 1;
            }
        }
        for e in evaluators {
            let acct = arena.credits(e).unwrap();
            let want = (completed.get(e).copied().unwrap_or(0), bought.get(e).copied().unwrap_or(0));
            ensure((acct.earned, acct.spent) == want, || {
                format!("step {step}: {e} has earned/spent {:?}, sessions say {want:?}", (acct.earned, acct.spent))
            })?;
            ensure(acct.spent <= acct.earned + acct.sponsored_base, || format!("step {step}: {e} overspent"))?;
            let before = previous.insert(e, (acct.earned, acct.spent)).unwrap_or((0, 0));
            ensure(acct.earned >= before.0 && acct.spent >= before.1, || format!("step {step}: {e} ledger went backwards"))?;
        }
    }
    let records = arena.feedback(ExportRange::all()).unwrap().len();
    let completed = sessions.iter().filter(|id| arena.session(id).unwrap().state == SessionState::Completed).count();
    ensure(records == completed, || format!("{records} feedback records for {completed} completed sessions"))?;
    Ok(format!("1000 operations, {} sessions, {completed} completed", sessions.len()))
}

fn race(rt: &tokio::runtime::Runtime) -> CheckResult {
    let (arena, clock) = stub_arena(usize::MAX);
    add_evaluator(&arena, "ada", 0);
    add_policies(&arena, rt, 2, "lab");
    let (mut submitted, mut expired) = (0i64, 0i64);
    for round in 0..100 {
        let view = arena.request_session("ada", None).unwrap();
        clock.set(view.deadline - Duration::milliseconds(1));
        let barrier = Arc::new(Barrier::new(2));
        let submitter = {
            let (arena, barrier, id) = (arena.clone(), barrier.clone(), view.session_id.clone());
            std::thread::spawn(move || {
                barrier.wait();
                arena.submit_feedback(&id, &feedback(Preference::A, 80, 10)).is_ok()
            })
        };
        let sweeper = {
            let (arena, barrier, clock, id) = (arena.clone(), barrier.clone(), clock.clone(), view.session_id.clone());
            std::thread::spawn(move || {
                barrier.wait();
                clock.advance(Duration::milliseconds(2));
                arena.cancel_expired_sessions().unwrap().contains(&id)
            })
        };
        let (won_feedback, won_expiry) = (submitter.join().unwrap(), sweeper.join().unwrap());
        let state = arena.session(&view.session_id).unwrap().state;
        match (won_feedback, won_expiry, state) {
            (true, false, SessionState::Completed) => submitted += 1,
            (false, true, SessionState::Cancelled) => expired += 1,
            other => return Err(format!("race {round} resolved as {other:?}")),
        }
    }
    let earned = arena.credits("ada").unwrap().earned;
    ensure(earned == submitted, || format!("earned {earned} for {submitted} accepted submissions"))?;
    let stored = arena.feedback(ExportRange::all()).unwrap().len() as i64;
    ensure(stored == submitted, || format!("{stored} records for {submitted} accepted submissions"))?;
    Ok(format!("100 races: {submitted} feedback, {expired} expiry"))
}

async fn serve_arena(arena: Arc<Arena>) -> String {
    let listener = tokio::net::TcpListener::bind(any_addr()).await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let app = router(arena);
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    base
}

/// Status, headers and body of a response, flattened for scanning.
async fn capture(resp: reqwest::Response) -> (u16, String) {
    let status = resp.status().as_u16();
    let headers: String = resp.headers().iter().map(|(k, v)| format!("{k}: {v:?}\n")).collect();
    let body = resp.text().await.unwrap();
    (status, format!("{headers}\n{body}"))
}

fn blind_scan(rt: &tokio::runtime::Runtime) -> CheckResult {
    rt.block_on(async {
        let clock = Arc::new(ManualClock::at_epoch());
        let arena = Arc::new(
            Arena::with_policy_client(Box::new(SqliteStore::in_memory().unwrap()), clock, ArenaConfig::default()).unwrap(),
        );
        let mut servers: Vec<SyntheticServer> = Vec::new();
        let mut secrets: Vec<String> = Vec::new();
        for k in 0..3 {
            let server = serve_synthetic(SyntheticPolicySpec::new(format!("s{k}"), 0.3 + 0.3 * k as f64), any_addr())
                .await
                .unwrap();
            let name = format!("Confidential Checkpoint {k}");
            let entry = arena
                .register_policy(PolicyDescriptor {
                    display_name: name.clone(),
                    endpoint: server.endpoint(),
                    open_source: false,
                    owner: "lab".into(),
                })
                .await
                .unwrap();
            arena.set_policy_status(&entry.policy_id, PolicyStatus::Active).unwrap();
            secrets.extend([entry.policy_id, name, server.endpoint(), server.addr().to_string()]);
            servers.push(server);
        }
        let base = serve_arena(arena.clone()).await;
        let http = reqwest::Client::new();
        let mut seen: Vec<(String, String)> = Vec::new();
        let mut record = |what: &str, status: u16, text: String| {
            seen.push((format!("{what} -> {status}"), text));
        };

        let (s, t) = capture(http.post(format!("{base}/evaluators")).json(&json!({"evaluator_id": "ada"})).send().await.unwrap()).await;
        record("register evaluator", s, t);
        let resp = http.post(format!("{base}/sessions")).json(&json!({"evaluator_id": "ada"})).send().await.unwrap();
        let (s, t) = capture(resp).await;
        let view: Value = serde_json::from_str(t.split_once("\n\n").map(|p| p.1).unwrap_or("")).map_err(|e| e.to_string())?;
        record("request session", s, t);
        let id = view["session_id"].as_str().ok_or("no session id")?.to_string();
        let (s, t) = capture(http.get(format!("{base}/sessions/{id}")).send().await.unwrap()).await;
        record("get session", s, t);
        for side in ["endpoint_a", "endpoint_b"] {
            let path = view[side].as_str().ok_or("no endpoint")?;
            for step in 0..3 {
                let obs = Observation::new("fold the cloth", step);
                let (s, t) = capture(http.post(format!("{base}{path}/act")).json(&obs).send().await.unwrap()).await;
                record(side, s, t);
            }
        }
        let obs = Observation::new("fold the cloth", 0);
        let (s, t) = capture(http.post(format!("{base}/proxy/not-a-token/act")).json(&obs).send().await.unwrap()).await;
        record("unknown proxy", s, t);
        let bad = json!({"instruction": "fold", "progress_a": 300, "progress_b": 0, "preference": "A", "explanation": "x"});
        let (s, t) = capture(http.post(format!("{base}/sessions/{id}/feedback")).json(&bad).send().await.unwrap()).await;
        record("invalid feedback", s, t);
        let (s, t) = capture(http.get(format!("{base}/evaluators/ada")).send().await.unwrap()).await;
        record("credits", s, t);
        // Killing one policy makes the relay fail; the failure must stay anonymous too.
        drop(servers.remove(0));
        let path = view["endpoint_a"].as_str().unwrap();
        let (s, t) = capture(http.post(format!("{base}{path}/act")).json(&obs).send().await.unwrap()).await;
        record("relay after policy loss", s, t);

        for (what, text) in &seen {
            for secret in &secrets {
                ensure(!text.contains(secret.as_str()), || format!("{what}: leaked {secret:?}"))?;
            }
        }
        Ok(format!("{} pre-completion responses free of {} identifying strings", seen.len(), secrets.len()))
    })
}

/// The server binary built alongside this test, building it if needed.
fn arena_binary() -> Result<PathBuf, String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let dir = exe.parent().and_then(Path::parent).ok_or("unexpected test binary location")?;
    let bin = dir.join(format!("arena-server{}", std::env::consts::EXE_SUFFIX));
    if !bin.exists() {
        let cargo = option_env!("CARGO").unwrap_or("cargo");
        let status = Command::new(cargo)
            .args(["build", "-p", "arena-server", "--bin", "arena-server"])
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success() && bin.exists(), || format!("could not build {}", bin.display()))?;
    }
    Ok(bin)
}

fn start_server(bin: &Path, db: &Path) -> Result<(Child, String), String> {
    let mut child = Command::new(bin)
        .args(["--db", db.to_str().unwrap(), "--bind", "127.0.0.1:0", "--max-open-sessions", "100"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("spawn {}: {e}", bin.display()))?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).map_err(|e| e.to_string())?;
    let base = line.trim().strip_prefix("listening on ").ok_or(format!("unexpected startup line {line:?}"))?;
    Ok((child, base.to_string()))
}

async fn post(http: &reqwest::Client, url: String, body: Value) -> Result<Value, reqwest::Error> {
    http.post(url).json(&body).send().await?.error_for_status()?.json().await
}

fn durability(rt: &tokio::runtime::Runtime) -> CheckResult {
    let bin = arena_binary()?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let db = dir.path().join("arena.db");
    rt.block_on(async {
        let p0 = serve_synthetic(SyntheticPolicySpec::new("d0", 0.3), any_addr()).await.unwrap();
        let p1 = serve_synthetic(SyntheticPolicySpec::new("d1", 0.7), any_addr()).await.unwrap();
        let http = reqwest::Client::new();
        let (mut child, base) = start_server(&bin, &db)?;
        for p in [&p0, &p1] {
            let entry = post(&http, format!("{base}/policies"), json!({"display_name": "d", "endpoint": p.endpoint(), "owner": "lab"}))
                .await
                .map_err(|e| e.to_string())?;
            let id = entry["policy_id"].as_str().unwrap();
            http.patch(format!("{base}/policies/{id}/status")).json(&json!({"status": "active"})).send().await.unwrap();
        }
        post(&http, format!("{base}/evaluators"), json!({"evaluator_id": "ada"})).await.map_err(|e| e.to_string())?;
        let mut sessions = Vec::new();
        for _ in 0..40 {
            let view = post(&http, format!("{base}/sessions"), json!({"evaluator_id": "ada"})).await.map_err(|e| e.to_string())?;
            sessions.push(view["session_id"].as_str().unwrap().to_string());
        }
        let body = |k: usize| {
            let preference = ["A", "B", "tie"][k % 3];
            json!({"instruction": format!("task {k}"), "progress_a": k, "progress_b": 40 - k,
                   "preference": preference, "explanation": format!("episode {k}"), "media_refs": []})
        };
        let mut acked = Vec::new();
        for (k, id) in sessions[..20].iter().enumerate() {
            post(&http, format!("{base}/sessions/{id}/feedback"), body(k)).await.map_err(|e| e.to_string())?;
            acked.push(id.clone());
        }
        let mut in_flight = Vec::new();
        for (k, id) in sessions[20..32].iter().enumerate() {
            let (http, url, b) = (http.clone(), format!("{base}/sessions/{id}/feedback"), body(20 + k));
            in_flight.push(tokio::spawn(async move { post(&http, url, b).await }));
        }
        child.kill().map_err(|e| e.to_string())?;
        child.wait().map_err(|e| e.to_string())?;
        for (k, task) in in_flight.into_iter().enumerate() {
            if task.await.unwrap().is_ok() {
                acked.push(sessions[20 + k].clone());
            }
        }

        let (mut child, base) = start_server(&bin, &db)?;
        let csv = http.get(format!("{base}/export")).send().await.unwrap().text().await.unwrap();
        let stored: Vec<&str> = csv.lines().skip(1).filter_map(|l| l.split(',').next()).collect();
        let outcome = (|| {
            for id in &acked {
                ensure(stored.contains(&id.as_str()), || format!("acknowledged {id} lost"))?;
            }
            for id in &sessions[32..] {
                ensure(!stored.contains(&id.as_str()), || format!("{id} stored without a submission"))?;
            }
            ensure(stored.len() <= 32, || "more records than submissions".into())
        })();
        child.kill().ok();
        child.wait().ok();
        outcome?;
        Ok(format!("{} acknowledged of 32 submitted survived SIGKILL ({} stored)", acked.len(), stored.len()))
    })
}

pub fn p8_properties() -> CheckResult {
    let rt = runtime();
    let parts: [(&str, fn(&tokio::runtime::Runtime) -> CheckResult); 5] = [
        ("uniformity", uniformity),
        ("conservation", conservation),
        ("race", race),
        ("blindness", blind_scan),
        ("durability", durability),
    ];
    let mut details = Vec::new();
    for (name, part) in parts {
        let detail = part(&rt).map_err(|e| format!("{name}: {e}"))?;
        details.push(format!("{name}: {detail}"));
    }
    Ok(details.join("; "))
}

// ---------------------------------------------------------------- P9

const SKILLS: [f64; 4] = [0.25, 0.5, 0.7, 0.9];
const SESSIONS: u64 = 50;

struct LoopRun {
    export: String,
    /// `(policy id, score bits)`, best first.
    board: Vec<(String, u64)>,
    offline: Vec<String>,
    /// Policy ids in skill order.
    ids: Vec<String>,
}

fn run_loop() -> Result<LoopRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rt = runtime();
    rt.block_on(async {
        let clock = Arc::new(ManualClock::at_epoch());
        let store = SqliteStore::open(dir.path().join("arena.db")).map_err(|e| e.to_string())?;
        let config = ArenaConfig {
            seed: 2024,
            ..ArenaConfig::default()
        };
        let arena = Arc::new(Arena::with_policy_client(Box::new(store), clock, config).map_err(|e| e.to_string())?);
        let mut servers = Vec::new();
        let mut ids = Vec::new();
        for (k, &skill) in SKILLS.iter().enumerate() {
            let server = serve_synthetic(SyntheticPolicySpec::new(format!("policy-{k}"), skill).with_seed(k as u64), any_addr())
                .await
                .map_err(|e| e.to_string())?;
            let entry = arena
                .register_policy(PolicyDescriptor {
                    display_name: format!("Policy {k}"),
                    endpoint: server.endpoint(),
                    open_source: true,
                    owner: "lab".into(),
                })
                .await
                .map_err(|e| e.to_string())?;
            arena.set_policy_status(&entry.policy_id, PolicyStatus::Active).map_err(|e| e.to_string())?;
            ids.push(entry.policy_id);
            servers.push(server);
        }
        arena
            .register_evaluator(EvaluatorRegistration {
                evaluator_id: "ada".into(),
                sponsored_base: None,
            })
            .map_err(|e| e.to_string())?;
        let base = serve_arena(arena.clone()).await;

        let world = sample_world(2, 5, 9);
        for k in 0..SESSIONS {
            let mut script = SessionScript::new(&base, "ada", InputMode::Simulated { instruction: None });
            script.seed = k;
            script.max_steps = 10;
            script.timeout = StdDuration::from_secs(5);
            script.trace_dir = dir.path().join("traces");
            run_session(&mut script, &world, &mut std::io::sink()).await.map_err(|e| format!("session {k}: {e}"))?;
        }

        let http = reqwest::Client::new();
        let export = http.get(format!("{base}/export")).send().await.unwrap().text().await.unwrap();
        let resp = http.get(format!("{base}/leaderboard?method=task_em&filter=all")).send().await.unwrap();
        ensure(resp.status().is_success(), || format!("leaderboard status {}", resp.status()))?;
        let snapshot: LeaderboardSnapshot = resp.json().await.map_err(|e| e.to_string())?;
        ensure(snapshot.record_count == SESSIONS as usize, || format!("{} records on the board", snapshot.record_count))?;

        // Offline: same export, same method, fitted outside the server.
        let records = read_csv(export.as_bytes()).map_err(|e| e.to_string())?;
        let labeled = LabeledDataset::from_labeled(&records).map_err(|e| e.to_string())?;
        let scores = rank(&labeled.dataset, RankingMethod::TaskEm, &RankingConfig::default()).map_err(|e| e.to_string())?;
        let offline = rank_from_scores(&scores.scores).into_iter().map(|k| labeled.label(k).to_string()).collect();
        Ok(LoopRun {
            export,
            board: snapshot.entries.iter().map(|e| (e.policy_id.clone(), e.score.to_bits())).collect(),
            offline,
            ids,
        })
    })
}

pub fn p9_end_to_end() -> CheckResult {
    let first = run_loop()?;
    let board: Vec<String> = first.board.iter().map(|(id, _)| id.clone()).collect();
    ensure(board == first.offline, || format!("leaderboard {board:?} vs offline fit {:?}", first.offline))?;
    let second = run_loop()?;
    ensure(first.export == second.export, || "exports differ between identical runs".into())?;
    ensure(first.board == second.board, || "leaderboards differ between identical runs".into())?;
    let by_skill: Vec<usize> = board.iter().map(|id| first.ids.iter().position(|p| p == id).unwrap()).collect();
    Ok(format!(
        "{SESSIONS} sessions, board order (by skill index) {by_skill:?} equals offline fit; two runs bit-identical"
    ))
}
