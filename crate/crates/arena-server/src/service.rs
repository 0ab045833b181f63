//! The arena's business rules on top of a [`Store`].

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use policy_gateway::{normalize_endpoint, ActionChunk, ConformanceReport, GatewayError, Observation, PolicyClient};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ranking_core::{io as rio, rank, rank_from_scores, LabeledRecord, RankingConfig, RankingMethod};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::clock::Clock;
use crate::error::{ArenaError, Result};
use crate::store::Store;
use crate::types::*;

/// How the server talks to policy inference servers.
#[async_trait]
pub trait PolicyBackend: Send + Sync {
    async fn probe(&self, endpoint: &str) -> std::result::Result<ConformanceReport, GatewayError>;
    async fn act(&self, endpoint: &str, obs: &Observation) -> std::result::Result<ActionChunk, GatewayError>;
}

#[async_trait]
impl PolicyBackend for PolicyClient {
    async fn probe(&self, endpoint: &str) -> std::result::Result<ConformanceReport, GatewayError> {
        self.probe_conformance(endpoint).await
    }

    async fn act(&self, endpoint: &str, obs: &Observation) -> std::result::Result<ActionChunk, GatewayError> {
        PolicyClient::act(self, endpoint, obs).await
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArenaConfig {
    pub session_timeout_secs: u64,
    pub max_open_sessions: usize,
    /// Credits granted to evaluators that do not ask for a specific amount.
    pub default_sponsored_base: i64,
    pub seed: u64,
    /// Deadline for conformance probes and relayed policy calls.
    pub policy_timeout_ms: u64,
    pub ranking: RankingConfig,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig {
            session_timeout_secs: 30 * 60,
            max_open_sessions: 3,
            default_sponsored_base: 0,
            seed: 0,
            policy_timeout_ms: 5_000,
            ranking: RankingConfig::default(),
        }
    }
}

struct Inner {
    store: Box<dyn Store>,
    rng: ChaCha8Rng,
}

/// The evaluation service. All state changes go through one lock and one
/// storage transaction each, so every operation is linearizable.
pub struct Arena {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
    backend: Arc<dyn PolicyBackend>,
    config: ArenaConfig,
}

impl std::fmt::Debug for Arena {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Arena").field("config", &self.config).finish_non_exhaustive()
    }
}

fn truncate_ms(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t.timestamp_millis()).expect("in range")
}

impl Arena {
    /// A fresh store starts the random stream at `config.seed`; a reopened one
    /// continues from a stream derived from how much it already holds, so
    /// identifiers never repeat across restarts.
    pub fn new(store: Box<dyn Store>, clock: Arc<dyn Clock>, backend: Arc<dyn PolicyBackend>, config: ArenaConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let existing = store.entity_count()?;
        if existing > 0 {
            rng.set_stream(existing);
        }
        Ok(Arena {
            inner: Mutex::new(Inner { store, rng }),
            clock,
            backend,
            config,
        })
    }

    /// Uses a real [`PolicyClient`] with the configured deadline.
    pub fn with_policy_client(store: Box<dyn Store>, clock: Arc<dyn Clock>, config: ArenaConfig) -> Result<Self> {
        let client = PolicyClient::new(Duration::from_millis(config.policy_timeout_ms));
        Arena::new(store, clock, Arc::new(client), config)
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        truncate_ms(self.clock.now())
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // A panic while holding the lock cannot leave the store inconsistent
        // because every mutation is a committed or rolled-back transaction.
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Probes the endpoint, then records the policy as `pending_safety`.
    pub async fn register_policy(&self, descriptor: PolicyDescriptor) -> Result<PolicyEntry> {
        let mut problems = Vec::new();
        if descriptor.display_name.trim().is_empty() {
            problems.push("display_name must not be empty".to_string());
        }
        if descriptor.owner.trim().is_empty() {
            problems.push("owner must not be empty".to_string());
        }
        if !problems.is_empty() {
            return Err(ArenaError::Validation(problems));
        }
        let endpoint =
            normalize_endpoint(&descriptor.endpoint).map_err(|_| ArenaError::InvalidEndpoint(descriptor.endpoint.clone()))?;
        match self.backend.probe(&endpoint).await {
            Ok(report) if report.schema_ok => {}
            Ok(report) => return Err(ArenaError::SchemaNonconformance(report.violations)),
            Err(e @ (GatewayError::Malformed(_) | GatewayError::Schema(_) | GatewayError::Status(_))) => {
                return Err(ArenaError::SchemaNonconformance(vec![e.to_string()]))
            }
            Err(e) => return Err(ArenaError::EndpointUnreachable(e.to_string())),
        }
        let now = self.now();
        let mut inner = self.lock();
        let entry = PolicyEntry {
            policy_id: Uuid::from_bytes(random_uuid_bytes(&mut inner.rng)).to_string(),
            display_name: descriptor.display_name,
            endpoint,
            status: PolicyStatus::PendingSafety,
            open_source: descriptor.open_source,
            owner: descriptor.owner,
            registered_at: now,
        };
        inner.store.insert_policy(&entry)?;
        tracing::info!(policy_id = %entry.policy_id, "policy registered");
        Ok(entry)
    }

    pub fn set_policy_status(&self, policy_id: &str, status: PolicyStatus) -> Result<PolicyEntry> {
        self.lock().store.set_policy_status(policy_id, status)
    }

    pub fn policy(&self, policy_id: &str) -> Result<PolicyEntry> {
        self.lock()
            .store
            .policy(policy_id)?
            .ok_or_else(|| ArenaError::PolicyNotFound(policy_id.to_string()))
    }

    pub fn policies(&self) -> Result<Vec<PolicyEntry>> {
        self.lock().store.policies()
    }

    /// Idempotent: re-registering returns the existing account unchanged.
    pub fn register_evaluator(&self, registration: EvaluatorRegistration) -> Result<CreditAccount> {
        if registration.evaluator_id.trim().is_empty() {
            return Err(ArenaError::invalid("evaluator_id must not be empty"));
        }
        let base = registration.sponsored_base.unwrap_or(self.config.default_sponsored_base);
        if base < 0 {
            return Err(ArenaError::invalid("sponsored_base must be nonnegative"));
        }
        self.lock().store.insert_account(&CreditAccount {
            evaluator_id: registration.evaluator_id,
            earned: 0,
            spent: 0,
            sponsored_base: base,
        })
    }

    pub fn credits(&self, evaluator_id: &str) -> Result<CreditAccount> {
        self.lock()
            .store
            .account(evaluator_id)?
            .ok_or_else(|| ArenaError::UnknownEvaluator(evaluator_id.to_string()))
    }

    /// Assigns a blind pair: a uniformly random unordered pair of distinct
    /// active policies, or, with `own_policy`, that policy against a uniformly
    /// random other active one for one credit. A/B order is uniform.
    pub fn request_session(&self, evaluator_id: &str, own_policy: Option<&str>) -> Result<SessionView> {
        let now = self.now();
        let mut guard = self.lock();
        let inner = &mut *guard;
        if inner.store.account(evaluator_id)?.is_none() {
            return Err(ArenaError::UnknownEvaluator(evaluator_id.to_string()));
        }
        if inner.store.open_sessions(evaluator_id, now)? >= self.config.max_open_sessions {
            return Err(ArenaError::TooManyOpenSessions {
                limit: self.config.max_open_sessions,
            });
        }
        let active: Vec<String> = inner
            .store
            .policies()?
            .into_iter()
            .filter(|p| p.status == PolicyStatus::Active)
            .map(|p| p.policy_id)
            .collect();

        let (first, second) = match own_policy {
            None => {
                if active.len() < 2 {
                    return Err(ArenaError::InsufficientPolicies { active: active.len() });
                }
                // Uniform over ordered pairs, hence uniform over unordered
                // pairs with a fair A/B order.
                let a = inner.rng.random_range(0..active.len());
                let b = (a + inner.rng.random_range(1..active.len())) % active.len();
                (active[a].clone(), active[b].clone())
            }
            Some(own) => {
                let entry = inner
                    .store
                    .policy(own)?
                    .ok_or_else(|| ArenaError::PolicyNotFound(own.to_string()))?;
                if entry.owner != evaluator_id {
                    return Err(ArenaError::PolicyNotOwned(own.to_string()));
                }
                if entry.status != PolicyStatus::Active {
                    return Err(ArenaError::PolicyInactive(own.to_string()));
                }
                let others: Vec<&String> = active.iter().filter(|p| p.as_str() != own).collect();
                if others.is_empty() {
                    return Err(ArenaError::InsufficientPolicies { active: active.len() });
                }
                let opponent = others[inner.rng.random_range(0..others.len())].clone();
                if inner.rng.random::<bool>() {
                    (own.to_string(), opponent)
                } else {
                    (opponent, own.to_string())
                }
            }
        };

        let session = EvalSession {
            session_id: Uuid::from_bytes(random_uuid_bytes(&mut inner.rng)).to_string(),
            evaluator_id: evaluator_id.to_string(),
            policy_a: first,
            policy_b: second,
            token_a: random_token(&mut inner.rng),
            token_b: random_token(&mut inner.rng),
            created_at: now,
            deadline: now + chrono::Duration::seconds(self.config.session_timeout_secs as i64),
            state: SessionState::Assigned,
            own_policy: own_policy.map(str::to_string),
        };
        inner.store.create_session(&session, own_policy.is_some())?;
        Ok(session.view())
    }

    pub fn session_view(&self, session_id: &str) -> Result<SessionView> {
        Ok(self.session(session_id)?.view())
    }

    /// Full session including hidden identities; for operators and tests.
    pub fn session(&self, session_id: &str) -> Result<EvalSession> {
        self.lock()
            .store
            .session(session_id)?
            .ok_or_else(|| ArenaError::SessionNotFound(session_id.to_string()))
    }

    /// Stores feedback, completes the session and earns the evaluator a credit.
    /// Accepted only while the session is assigned and strictly before its
    /// deadline.
    pub fn submit_feedback(&self, session_id: &str, feedback: &FeedbackSubmission) -> Result<FeedbackAck> {
        feedback.validate()?;
        let now = self.now();
        let (record, account) = self.lock().store.complete_session(session_id, feedback, now)?;
        Ok(FeedbackAck {
            session_id: record.session_id,
            record_seq: record.seq,
            earned: account.earned,
            balance: account.balance(),
        })
    }

    /// Cancels every assigned session whose deadline is strictly before now.
    pub fn cancel_expired_sessions(&self) -> Result<Vec<String>> {
        let now = self.now();
        let cancelled = self.lock().store.cancel_expired(now)?;
        if !cancelled.is_empty() {
            tracing::info!(count = cancelled.len(), "cancelled expired sessions");
        }
        Ok(cancelled)
    }

    pub fn feedback(&self, range: ExportRange) -> Result<Vec<FeedbackRecord>> {
        self.lock().store.feedback(range)
    }

    /// Ranks the policies that appear in stored feedback. With the
    /// open-source filter only comparisons between two open-source policies
    /// count.
    pub fn leaderboard(&self, method: RankingMethod, filter: LeaderboardFilter) -> Result<LeaderboardSnapshot> {
        let (policies, records) = {
            let inner = self.lock();
            (inner.store.policies()?, inner.store.feedback(ExportRange::all())?)
        };
        let open: std::collections::HashSet<&str> =
            policies.iter().filter(|p| p.open_source).map(|p| p.policy_id.as_str()).collect();
        let labeled: Vec<LabeledRecord> = records
            .iter()
            .filter(|r| match filter {
                LeaderboardFilter::All => true,
                LeaderboardFilter::OpenSource => open.contains(r.policy_a.as_str()) && open.contains(r.policy_b.as_str()),
            })
            .map(FeedbackRecord::to_labeled)
            .collect();
        if labeled.is_empty() {
            return Err(ArenaError::InsufficientData("no feedback records".into()));
        }
        let ranked = leaderboard_scores(&labeled, method, &self.config.ranking)?;
        let entries = ranked
            .into_iter()
            .enumerate()
            .map(|(k, (policy_id, score))| {
                let entry = policies.iter().find(|p| p.policy_id == policy_id);
                LeaderboardEntry {
                    rank: k + 1,
                    display_name: entry.map(|p| p.display_name.clone()).unwrap_or_default(),
                    open_source: entry.is_some_and(|p| p.open_source),
                    policy_id,
                    score,
                }
            })
            .collect();
        Ok(LeaderboardSnapshot {
            method,
            filter,
            entries,
            record_count: labeled.len(),
            generated_at: self.now(),
        })
    }

    /// Writes the record CSV to `records` and the free-text sidecar (JSON
    /// lines) to `sidecar`, both in append order.
    pub fn export<W1: Write, W2: Write>(&self, range: ExportRange, records: W1, mut sidecar: W2) -> Result<usize> {
        let rows = self.feedback(range)?;
        let labeled: Vec<LabeledRecord> = rows.iter().map(FeedbackRecord::to_labeled).collect();
        rio::write_csv(records, &labeled).map_err(|e| ArenaError::Storage(e.to_string()))?;
        for row in &rows {
            serde_json::to_writer(&mut sidecar, &SidecarEntry::from(row))?;
            sidecar.write_all(b"\n").map_err(|e| ArenaError::Storage(e.to_string()))?;
        }
        Ok(rows.len())
    }

    /// Relays one observation to the policy behind `token`. Failures are
    /// reported without any detail that could identify the policy.
    pub async fn relay_act(&self, token: &str, obs: &Observation) -> Result<ActionChunk> {
        let now = self.now();
        let (session, policy_id) = self
            .lock()
            .store
            .session_by_token(token)?
            .ok_or_else(|| ArenaError::SessionNotFound("unknown endpoint token".into()))?;
        match session.state {
            SessionState::Completed => return Err(ArenaError::SessionCompleted(session.session_id)),
            SessionState::Cancelled => return Err(ArenaError::SessionCancelled(session.session_id)),
            SessionState::Assigned if now >= session.deadline => return Err(ArenaError::SessionExpired(session.session_id)),
            SessionState::Assigned => {}
        }
        let endpoint = self.policy(&policy_id)?.endpoint;
        self.backend.act(&endpoint, obs).await.map_err(|e| {
            ArenaError::Upstream(
                match e {
                    GatewayError::Timeout(_) => "policy did not answer in time",
                    GatewayError::Schema(_) | GatewayError::Malformed(_) => "policy returned an invalid action chunk",
                    GatewayError::Status(_) => "policy rejected the observation",
                    _ => "policy unreachable",
                }
                .to_string(),
            )
        })
    }
}

/// `(policy_id, score)` best first, fit exactly as an offline run over the
/// exported CSV would be.
pub fn leaderboard_scores(records: &[LabeledRecord], method: RankingMethod, config: &RankingConfig) -> Result<Vec<(String, f64)>> {
    let data = rio::to_dataset(records).map_err(|e| ArenaError::InsufficientData(e.to_string()))?;
    let scores = rank(&data.dataset, method, config).map_err(|e| ArenaError::InsufficientData(e.to_string()))?;
    Ok(rank_from_scores(&scores.scores)
        .into_iter()
        .map(|i| (data.labels[i].clone(), scores.scores[i]))
        .collect())
}

fn random_uuid_bytes(rng: &mut ChaCha8Rng) -> [u8; 16] {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    *uuid::Builder::from_random_bytes(bytes).as_uuid().as_bytes()
}

fn random_token(rng: &mut ChaCha8Rng) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs [`Arena::cancel_expired_sessions`] every `every` until aborted.
pub fn spawn_expiry_task(arena: Arc<Arena>, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(every);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            ticker.tick().await;
            if let Err(err) = arena.cancel_expired_sessions() {
                tracing::warn!(%err, "expiry sweep failed");
            }
        }
    })
}
