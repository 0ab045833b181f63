//! Wire and storage types.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use ranking_core::{LabeledRecord, Outcome, RankingMethod};
use serde::{Deserialize, Serialize};

use crate::error::ArenaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyStatus {
    PendingSafety,
    Active,
    Deprecated,
}

impl PolicyStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyStatus::PendingSafety => "pending_safety",
            PolicyStatus::Active => "active",
            PolicyStatus::Deprecated => "deprecated",
        }
    }
}

impl FromStr for PolicyStatus {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending_safety" => Ok(PolicyStatus::PendingSafety),
            "active" => Ok(PolicyStatus::Active),
            "deprecated" => Ok(PolicyStatus::Deprecated),
            other => Err(ArenaError::invalid(format!("unknown policy status {other:?}"))),
        }
    }
}

/// What a policy owner submits to register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDescriptor {
    pub display_name: String,
    pub endpoint: String,
    #[serde(default)]
    pub open_source: bool,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub policy_id: String,
    pub display_name: String,
    pub endpoint: String,
    pub status: PolicyStatus,
    pub open_source: bool,
    pub owner: String,
    pub registered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorRegistration {
    pub evaluator_id: String,
    /// Credits granted up front; defaults to the server's configured value.
    #[serde(default)]
    pub sponsored_base: Option<i64>,
}

/// Credit ledger entry of one evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditAccount {
    pub evaluator_id: String,
    pub earned: i64,
    pub spent: i64,
    pub sponsored_base: i64,
}

impl CreditAccount {
    pub fn balance(&self) -> i64 {
        self.earned + self.sponsored_base - self.spent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditView {
    pub evaluator_id: String,
    pub earned: i64,
    pub spent: i64,
    pub sponsored_base: i64,
    pub balance: i64,
}

impl From<&CreditAccount> for CreditView {
    fn from(a: &CreditAccount) -> Self {
        CreditView {
            evaluator_id: a.evaluator_id.clone(),
            earned: a.earned,
            spent: a.spent,
            sponsored_base: a.sponsored_base,
            balance: a.balance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Assigned,
    Completed,
    Cancelled,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Assigned => "assigned",
            SessionState::Completed => "completed",
            SessionState::Cancelled => "cancelled",
        }
    }
}

impl FromStr for SessionState {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "assigned" => Ok(SessionState::Assigned),
            "completed" => Ok(SessionState::Completed),
            "cancelled" => Ok(SessionState::Cancelled),
            other => Err(ArenaError::Storage(format!("unknown session state {other:?}"))),
        }
    }
}

/// Full session record. Never sent to evaluators; see [`SessionView`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSession {
    pub session_id: String,
    pub evaluator_id: String,
    pub policy_a: String,
    pub policy_b: String,
    pub token_a: String,
    pub token_b: String,
    pub created_at: DateTime<Utc>,
    pub deadline: DateTime<Utc>,
    pub state: SessionState,
    /// Set when the session was bought with a credit for this policy.
    pub own_policy: Option<String>,
}

impl EvalSession {
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            evaluator_id: self.evaluator_id.clone(),
            endpoint_a: proxy_path(&self.token_a),
            endpoint_b: proxy_path(&self.token_b),
            created_at: self.created_at,
            deadline: self.deadline,
            state: self.state,
        }
    }
}

/// Relative URL under which the server relays calls for one side of a session.
pub fn proxy_path(token: &str) -> String {
    format!("/proxy/{token}")
}

/// What an evaluator sees of a session: opaque endpoints, no identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub evaluator_id: String,
    pub endpoint_a: String,
    pub endpoint_b: String,
    pub created_at: DateTime<Utc>,
    pub deadline: DateTime<Utc>,
    pub state: SessionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub evaluator_id: String,
    /// Spend a credit to pair this owned policy against a random opponent.
    #[serde(default)]
    pub policy_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preference {
    #[serde(rename = "A", alias = "a")]
    A,
    #[serde(rename = "B", alias = "b")]
    B,
    #[serde(rename = "tie", alias = "Tie", alias = "TIE")]
    Tie,
}

impl Preference {
    pub fn as_str(self) -> &'static str {
        match self {
            Preference::A => "A",
            Preference::B => "B",
            Preference::Tie => "tie",
        }
    }

    pub fn outcome(self) -> Outcome {
        match self {
            Preference::A => Outcome::Win,
            Preference::B => Outcome::Loss,
            Preference::Tie => Outcome::Tie,
        }
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preference {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Preference::A),
            "B" | "b" => Ok(Preference::B),
            "tie" | "Tie" | "TIE" => Ok(Preference::Tie),
            other => Err(ArenaError::invalid(format!("unknown preference {other:?}"))),
        }
    }
}

/// Body of `POST /sessions/{id}/feedback`.
///
/// Progress values are read as signed integers so out-of-range input is
/// reported as a validation error rather than a decoding failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSubmission {
    pub instruction: String,
    pub progress_a: i64,
    pub progress_b: i64,
    pub preference: Preference,
    pub explanation: String,
    #[serde(default)]
    pub media_refs: Vec<String>,
}

impl FeedbackSubmission {
    pub fn validate(&self) -> Result<(), ArenaError> {
        let mut problems = Vec::new();
        for (name, v) in [("progress_a", self.progress_a), ("progress_b", self.progress_b)] {
            if !(0..=100).contains(&v) {
                problems.push(format!("{name} must be an integer in [0, 100], got {v}"));
            }
        }
        if self.explanation.trim().is_empty() {
            problems.push("explanation must not be empty".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ArenaError::Validation(problems))
        }
    }
}

/// A persisted evaluation with de-anonymized policy ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    /// Position in the append-only log, starting at 1.
    pub seq: i64,
    pub session_id: String,
    pub evaluator_id: String,
    pub policy_a: String,
    pub policy_b: String,
    pub instruction: String,
    pub progress_a: u8,
    pub progress_b: u8,
    pub preference: Preference,
    pub explanation: String,
    pub media_refs: Vec<String>,
    pub submitted_at: DateTime<Utc>,
}

impl FeedbackRecord {
    /// Policy A is `policy_i`; progress is rescaled to `[0, 1]`; the
    /// instruction becomes the task label.
    pub fn to_labeled(&self) -> LabeledRecord {
        LabeledRecord {
            trial_id: self.session_id.clone(),
            policy_i: self.policy_a.clone(),
            policy_j: self.policy_b.clone(),
            outcome: self.preference.outcome(),
            progress_i: Some(f64::from(self.progress_a) / 100.0),
            progress_j: Some(f64::from(self.progress_b) / 100.0),
            task_label: (!self.instruction.is_empty()).then(|| self.instruction.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub session_id: String,
    pub record_seq: i64,
    pub earned: i64,
    pub balance: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderboardFilter {
    #[default]
    All,
    OpenSource,
}

impl FromStr for LeaderboardFilter {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(LeaderboardFilter::All),
            "open_source" | "open-source" => Ok(LeaderboardFilter::OpenSource),
            other => Err(ArenaError::invalid(format!("unknown leaderboard filter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    /// 1-based position.
    pub rank: usize,
    pub policy_id: String,
    pub display_name: String,
    pub open_source: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardSnapshot {
    pub method: RankingMethod,
    pub filter: LeaderboardFilter,
    /// Best first.
    pub entries: Vec<LeaderboardEntry>,
    pub record_count: usize,
    pub generated_at: DateTime<Utc>,
}

impl LeaderboardSnapshot {
    pub fn ordering(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.policy_id.as_str()).collect()
    }
}

/// Half-open range of feedback sequence numbers; open ends are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExportRange {
    pub from: Option<i64>,
    pub to: Option<i64>,
}

impl ExportRange {
    pub fn all() -> Self {
        ExportRange::default()
    }

    pub fn contains(&self, seq: i64) -> bool {
        self.from.is_none_or(|f| seq >= f) && self.to.is_none_or(|t| seq < t)
    }
}

/// Free-text fields that do not fit the record CSV, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub seq: i64,
    pub trial_id: String,
    pub evaluator_id: String,
    pub instruction: String,
    pub explanation: String,
    pub media_refs: Vec<String>,
    pub submitted_at: DateTime<Utc>,
}

impl From<&FeedbackRecord> for SidecarEntry {
    fn from(r: &FeedbackRecord) -> Self {
        SidecarEntry {
            seq: r.seq,
            trial_id: r.session_id.clone(),
            evaluator_id: r.evaluator_id.clone(),
            instruction: r.instruction.clone(),
            explanation: r.explanation.clone(),
            media_refs: r.media_refs.clone(),
            submitted_at: r.submitted_at,
        }
    }
}
