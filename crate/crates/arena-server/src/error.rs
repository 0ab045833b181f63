use thiserror::Error;

pub type Result<T> = std::result::Result<T, ArenaError>;

/// Every failure the service reports. Each variant has a stable
/// machine-readable [`code`](ArenaError::code).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArenaError {
    #[error("policy {0} not found")]
    PolicyNotFound(String),

    #[error("session {0} not found")]
    SessionNotFound(String),

    #[error("evaluator {0} is not registered")]
    UnknownEvaluator(String),

    #[error("invalid endpoint {0:?}")]
    InvalidEndpoint(String),

    #[error("policy endpoint unreachable: {0}")]
    EndpointUnreachable(String),

    #[error("policy endpoint does not conform to the action schema: {}", .0.join("; "))]
    SchemaNonconformance(Vec<String>),

    #[error("need at least two active policies, have {active}")]
    InsufficientPolicies { active: usize },

    #[error("insufficient credit: balance {balance}")]
    InsufficientCredit { balance: i64 },

    #[error("policy {0} is not owned by the requesting evaluator")]
    PolicyNotOwned(String),

    #[error("policy {0} is not active")]
    PolicyInactive(String),

    #[error("evaluator already holds {limit} open sessions")]
    TooManyOpenSessions { limit: usize },

    #[error("session {0} has expired")]
    SessionExpired(String),

    #[error("session {0} was cancelled")]
    SessionCancelled(String),

    #[error("session {0} is already completed")]
    SessionCompleted(String),

    #[error("invalid request: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("not enough data for a leaderboard: {0}")]
    InsufficientData(String),

    #[error("policy server failed: {0}")]
    Upstream(String),

    #[error("storage failure: {0}")]
    Storage(String),
}

impl ArenaError {
    pub fn code(&self) -> &'static str {
        match self {
            ArenaError::PolicyNotFound(_) => "policy_not_found",
            ArenaError::SessionNotFound(_) => "session_not_found",
            ArenaError::UnknownEvaluator(_) => "unknown_evaluator",
            ArenaError::InvalidEndpoint(_) => "invalid_endpoint",
            ArenaError::EndpointUnreachable(_) => "endpoint_unreachable",
            ArenaError::SchemaNonconformance(_) => "schema_nonconformance",
            ArenaError::InsufficientPolicies { .. } => "insufficient_policies",
            ArenaError::InsufficientCredit { .. } => "insufficient_credit",
            ArenaError::PolicyNotOwned(_) => "policy_not_owned",
            ArenaError::PolicyInactive(_) => "policy_inactive",
            ArenaError::TooManyOpenSessions { .. } => "too_many_open_sessions",
            ArenaError::SessionExpired(_) => "session_expired",
            ArenaError::SessionCancelled(_) => "session_cancelled",
            ArenaError::SessionCompleted(_) => "session_completed",
            ArenaError::Validation(_) => "validation",
            ArenaError::InsufficientData(_) => "insufficient_data",
            ArenaError::Upstream(_) => "upstream",
            ArenaError::Storage(_) => "storage",
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        ArenaError::Validation(vec![message.into()])
    }
}

impl From<rusqlite::Error> for ArenaError {
    fn from(err: rusqlite::Error) -> Self {
        ArenaError::Storage(err.to_string())
    }
}

impl From<serde_json::Error> for ArenaError {
    fn from(err: serde_json::Error) -> Self {
        ArenaError::Storage(err.to_string())
    }
}
