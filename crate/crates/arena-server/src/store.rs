//! Persistence behind a narrow interface.
//!
//! Every method that changes more than one row runs in a single immediate
//! transaction, so session transitions, ledger updates and record appends are
//! atomic and serialized regardless of how callers interleave.

use std::path::Path;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row, TransactionBehavior};

use crate::error::{ArenaError, Result};
use crate::types::{
    CreditAccount, EvalSession, ExportRange, FeedbackRecord, FeedbackSubmission, PolicyEntry, PolicyStatus,
    SessionState,
};

pub trait Store: Send {
    fn insert_policy(&mut self, entry: &PolicyEntry) -> Result<()>;
    fn policy(&self, policy_id: &str) -> Result<Option<PolicyEntry>>;
    /// All policies in registration order.
    fn policies(&self) -> Result<Vec<PolicyEntry>>;
    fn set_policy_status(&mut self, policy_id: &str, status: PolicyStatus) -> Result<PolicyEntry>;

    /// Creates the account, or returns the existing one unchanged.
    fn insert_account(&mut self, account: &CreditAccount) -> Result<CreditAccount>;
    fn account(&self, evaluator_id: &str) -> Result<Option<CreditAccount>>;

    /// Assigned sessions of `evaluator_id` whose deadline has not passed.
    fn open_sessions(&self, evaluator_id: &str, now: DateTime<Utc>) -> Result<usize>;
    /// Inserts the session; with `debit`, spends one credit in the same
    /// transaction and fails without effect when the balance is below one.
    fn create_session(&mut self, session: &EvalSession, debit: bool) -> Result<()>;
    fn session(&self, session_id: &str) -> Result<Option<EvalSession>>;
    /// The session owning an endpoint token and the policy behind it.
    fn session_by_token(&self, token: &str) -> Result<Option<(EvalSession, String)>>;

    /// Appends the feedback, completes the session and credits the evaluator,
    /// or changes nothing if the session is not assigned or `now` is not
    /// before its deadline.
    fn complete_session(
        &mut self,
        session_id: &str,
        feedback: &FeedbackSubmission,
        now: DateTime<Utc>,
    ) -> Result<(FeedbackRecord, CreditAccount)>;
    /// Cancels every assigned session with `deadline < now`.
    fn cancel_expired(&mut self, now: DateTime<Utc>) -> Result<Vec<String>>;

    /// Feedback in append order.
    fn feedback(&self, range: ExportRange) -> Result<Vec<FeedbackRecord>>;
    /// Rows across policies, accounts and sessions; used to derive fresh
    /// random streams after a restart.
    fn entity_count(&self) -> Result<u64>;
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS policies (
    seq           INTEGER PRIMARY KEY AUTOINCREMENT,
    policy_id     TEXT NOT NULL UNIQUE,
    display_name  TEXT NOT NULL,
    endpoint      TEXT NOT NULL,
    status        TEXT NOT NULL,
    open_source   INTEGER NOT NULL,
    owner         TEXT NOT NULL,
    registered_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS accounts (
    evaluator_id   TEXT PRIMARY KEY,
    earned         INTEGER NOT NULL CHECK (earned >= 0),
    spent          INTEGER NOT NULL CHECK (spent >= 0),
    sponsored_base INTEGER NOT NULL CHECK (sponsored_base >= 0),
    CHECK (spent <= earned + sponsored_base)
);
CREATE TABLE IF NOT EXISTS sessions (
    session_id   TEXT PRIMARY KEY,
    evaluator_id TEXT NOT NULL REFERENCES accounts(evaluator_id),
    policy_a     TEXT NOT NULL REFERENCES policies(policy_id),
    policy_b     TEXT NOT NULL REFERENCES policies(policy_id),
    token_a      TEXT NOT NULL UNIQUE,
    token_b      TEXT NOT NULL UNIQUE,
    created_at   INTEGER NOT NULL,
    deadline     INTEGER NOT NULL,
    state        TEXT NOT NULL,
    own_policy   TEXT,
    CHECK (policy_a <> policy_b)
);
CREATE INDEX IF NOT EXISTS sessions_by_state ON sessions(state, deadline);
CREATE TABLE IF NOT EXISTS feedback (
    seq          INTEGER PRIMARY KEY AUTOINCREMENT,
    session_id   TEXT NOT NULL UNIQUE REFERENCES sessions(session_id),
    evaluator_id TEXT NOT NULL,
    policy_a     TEXT NOT NULL,
    policy_b     TEXT NOT NULL,
    instruction  TEXT NOT NULL,
    progress_a   INTEGER NOT NULL CHECK (progress_a BETWEEN 0 AND 100),
    progress_b   INTEGER NOT NULL CHECK (progress_b BETWEEN 0 AND 100),
    preference   TEXT NOT NULL,
    explanation  TEXT NOT NULL,
    media_refs   TEXT NOT NULL,
    submitted_at INTEGER NOT NULL
);
";

/// SQLite-backed store. Commits are synchronous, so anything acknowledged
/// survives a process crash.
pub struct SqliteStore {
    conn: Connection,
}

impl std::fmt::Debug for SqliteStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SqliteStore").finish_non_exhaustive()
    }
}

fn millis(t: DateTime<Utc>) -> i64 {
    t.timestamp_millis()
}

fn from_millis(ms: i64) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::from_timestamp_millis(ms).ok_or(rusqlite::Error::IntegralValueOutOfRange(0, ms))
}

fn parse_col<T: std::str::FromStr>(idx: usize, s: String) -> rusqlite::Result<T> {
    s.parse::<T>().map_err(|_| {
        rusqlite::Error::FromSqlConversionFailure(idx, rusqlite::types::Type::Text, format!("bad value {s:?}").into())
    })
}

impl SqliteStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        Self::init(conn)
    }

    pub fn in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch(SCHEMA)?;
        Ok(SqliteStore { conn })
    }

    fn policy_row(row: &Row<'_>) -> rusqlite::Result<PolicyEntry> {
        Ok(PolicyEntry {
            policy_id: row.get(0)?,
            display_name: row.get(1)?,
            endpoint: row.get(2)?,
            status: parse_col(3, row.get::<_, String>(3)?)?,
            open_source: row.get(4)?,
            owner: row.get(5)?,
            registered_at: from_millis(row.get(6)?)?,
        })
    }

    fn session_row(row: &Row<'_>) -> rusqlite::Result<EvalSession> {
        Ok(EvalSession {
            session_id: row.get(0)?,
            evaluator_id: row.get(1)?,
            policy_a: row.get(2)?,
            policy_b: row.get(3)?,
            token_a: row.get(4)?,
            token_b: row.get(5)?,
            created_at: from_millis(row.get(6)?)?,
            deadline: from_millis(row.get(7)?)?,
            state: parse_col(8, row.get::<_, String>(8)?)?,
            own_policy: row.get(9)?,
        })
    }

    fn account_row(row: &Row<'_>) -> rusqlite::Result<CreditAccount> {
        Ok(CreditAccount {
            evaluator_id: row.get(0)?,
            earned: row.get(1)?,
            spent: row.get(2)?,
            sponsored_base: row.get(3)?,
        })
    }

    fn feedback_row(row: &Row<'_>) -> rusqlite::Result<FeedbackRecord> {
        let media: String = row.get(10)?;
        Ok(FeedbackRecord {
            seq: row.get(0)?,
            session_id: row.get(1)?,
            evaluator_id: row.get(2)?,
            policy_a: row.get(3)?,
            policy_b: row.get(4)?,
            instruction: row.get(5)?,
            progress_a: row.get(6)?,
            progress_b: row.get(7)?,
            preference: parse_col(8, row.get::<_, String>(8)?)?,
            explanation: row.get(9)?,
            media_refs: serde_json::from_str(&media).map_err(|e| {
                rusqlite::Error::FromSqlConversionFailure(10, rusqlite::types::Type::Text, Box::new(e))
            })?,
            submitted_at: from_millis(row.get(11)?)?,
        })
    }
}

const POLICY_COLS: &str = "policy_id, display_name, endpoint, status, open_source, owner, registered_at";
const SESSION_COLS: &str =
    "session_id, evaluator_id, policy_a, policy_b, token_a, token_b, created_at, deadline, state, own_policy";
const FEEDBACK_COLS: &str = "seq, session_id, evaluator_id, policy_a, policy_b, instruction, progress_a, progress_b, \
     preference, explanation, media_refs, submitted_at";

impl Store for SqliteStore {
    fn insert_policy(&mut self, entry: &PolicyEntry) -> Result<()> {
        self.conn.execute(
            &format!("INSERT INTO policies ({POLICY_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)"),
            params![
                entry.policy_id,
                entry.display_name,
                entry.endpoint,
                entry.status.as_str(),
                entry.open_source,
                entry.owner,
                millis(entry.registered_at)
            ],
        )?;
        Ok(())
    }

    fn policy(&self, policy_id: &str) -> Result<Option<PolicyEntry>> {
        Ok(self
            .conn
            .query_row(
                &format!("SELECT {POLICY_COLS} FROM policies WHERE policy_id = ?1"),
                [policy_id],
                Self::policy_row,
            )
            .optional()?)
    }

    fn policies(&self) -> Result<Vec<PolicyEntry>> {
        let mut stmt = self.conn.prepare(&format!("SELECT {POLICY_COLS} FROM policies ORDER BY seq"))?;
        let rows = stmt.query_map([], Self::policy_row)?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    fn set_policy_status(&mut self, policy_id: &str, status: PolicyStatus) -> Result<PolicyEntry> {
        let changed = self
            .conn
            .execute("UPDATE policies SET status = ?1 WHERE policy_id = ?2", params![status.as_str(), policy_id])?;
        if changed == 0 {
            return Err(ArenaError::PolicyNotFound(policy_id.to_string()));
        }
        self.policy(policy_id)?.ok_or_else(|| ArenaError::PolicyNotFound(policy_id.to_string()))
    }

    fn insert_account(&mut self, account: &CreditAccount) -> Result<CreditAccount> {
        self.conn.execute(
            "INSERT OR IGNORE INTO accounts (evaluator_id, earned, spent, sponsored_base) VALUES (?1, ?2, ?3, ?4)",
            params![account.evaluator_id, account.earned, account.spent, account.sponsored_base],
        )?;
        self.account(&account.evaluator_id)?
            .ok_or_else(|| ArenaError::Storage("account vanished after insert".into()))
    }

    fn account(&self, evaluator_id: &str) -> Result<Option<CreditAccount>> {
        Ok(self
            .conn
            .query_row(
                "SELECT evaluator_id, earned, spent, sponsored_base FROM accounts WHERE evaluator_id = ?1",
                [evaluator_id],
                Self::account_row,
            )
            .optional()?)
    }

    fn open_sessions(&self, evaluator_id: &str, now: DateTime<Utc>) -> Result<usize> {
        let n: i64 = self.conn.query_row(
            "SELECT COUNT(*) FROM sessions WHERE evaluator_id = ?1 AND state = 'assigned' AND deadline >= ?2",
            params![evaluator_id, millis(now)],
            |r| r.get(0),
        )?;
        Ok(n as usize)
    }

    fn create_session(&mut self, session: &EvalSession, debit: bool) -> Result<()> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        if debit {
            let account = tx
                .query_row(
                    "SELECT evaluator_id, earned, spent, sponsored_base FROM accounts WHERE evaluator_id = ?1",
                    [&session.evaluator_id],
                    Self::account_row,
                )
                .optional()?
                .ok_or_else(|| ArenaError::UnknownEvaluator(session.evaluator_id.clone()))?;
            if account.balance() < 1 {
                return Err(ArenaError::InsufficientCredit {
                    balance: account.balance(),
                });
            }
            tx.execute("UPDATE accounts SET spent = spent + 1 WHERE evaluator_id = ?1", [&session.evaluator_id])?;
        }
        tx.execute(
            &format!("INSERT INTO sessions ({SESSION_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)"),
            params![
                session.session_id,
                session.evaluator_id,
                session.policy_a,
                session.policy_b,
                session.token_a,
                session.token_b,
                millis(session.created_at),
                millis(session.deadline),
                session.state.as_str(),
                session.own_policy
            ],
        )?;
        tx.commit()?;
        Ok(())
    }

    fn session(&self, session_id: &str) -> Result<Option<EvalSession>> {
        Ok(self
            .conn
            .query_row(
                &format!("SELECT {SESSION_COLS} FROM sessions WHERE session_id = ?1"),
                [session_id],
                Self::session_row,
            )
            .optional()?)
    }

    fn session_by_token(&self, token: &str) -> Result<Option<(EvalSession, String)>> {
        let session = self
            .conn
            .query_row(
                &format!("SELECT {SESSION_COLS} FROM sessions WHERE token_a = ?1 OR token_b = ?1"),
                [token],
                Self::session_row,
            )
            .optional()?;
        Ok(session.map(|s| {
            let policy = if s.token_a == token { s.policy_a.clone() } else { s.policy_b.clone() };
            (s, policy)
        }))
    }

    fn complete_session(
        &mut self,
        session_id: &str,
        feedback: &FeedbackSubmission,
        now: DateTime<Utc>,
    ) -> Result<(FeedbackRecord, CreditAccount)> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let session = tx
            .query_row(
                &format!("SELECT {SESSION_COLS} FROM sessions WHERE session_id = ?1"),
                [session_id],
                Self::session_row,
            )
            .optional()?
            .ok_or_else(|| ArenaError::SessionNotFound(session_id.to_string()))?;
        match session.state {
            SessionState::Completed => return Err(ArenaError::SessionCompleted(session_id.to_string())),
            SessionState::Cancelled => return Err(ArenaError::SessionCancelled(session_id.to_string())),
            SessionState::Assigned if millis(now) >= millis(session.deadline) => {
                return Err(ArenaError::SessionExpired(session_id.to_string()))
            }
            SessionState::Assigned => {}
        }
        let media = serde_json::to_string(&feedback.media_refs)?;
        tx.execute(
            "INSERT INTO feedback (session_id, evaluator_id, policy_a, policy_b, instruction, progress_a, progress_b, \
             preference, explanation, media_refs, submitted_at) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11)",
            params![
                session.session_id,
                session.evaluator_id,
                session.policy_a,
                session.policy_b,
                feedback.instruction,
                feedback.progress_a,
                feedback.progress_b,
                feedback.preference.as_str(),
                feedback.explanation,
                media,
                millis(now)
            ],
        )?;
        let seq = tx.last_insert_rowid();
        let updated = tx.execute(
            "UPDATE sessions SET state = 'completed' WHERE session_id = ?1 AND state = 'assigned'",
            [session_id],
        )?;
        debug_assert_eq!(updated, 1);
        tx.execute("UPDATE accounts SET earned = earned + 1 WHERE evaluator_id = ?1", [&session.evaluator_id])?;
        let record = tx.query_row(
            &format!("SELECT {FEEDBACK_COLS} FROM feedback WHERE seq = ?1"),
            [seq],
            Self::feedback_row,
        )?;
        let account = tx.query_row(
            "SELECT evaluator_id, earned, spent, sponsored_base FROM accounts WHERE evaluator_id = ?1",
            [&session.evaluator_id],
            Self::account_row,
        )?;
        tx.commit()?;
        Ok((record, account))
    }

    fn cancel_expired(&mut self, now: DateTime<Utc>) -> Result<Vec<String>> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let ids: Vec<String> = {
            let mut stmt = tx.prepare(
                "SELECT session_id FROM sessions WHERE state = 'assigned' AND deadline < ?1 ORDER BY created_at, session_id",
            )?;
            let rows = stmt.query_map([millis(now)], |r| r.get(0))?;
            rows.collect::<rusqlite::Result<_>>()?
        };
        for id in &ids {
            tx.execute("UPDATE sessions SET state = 'cancelled' WHERE session_id = ?1 AND state = 'assigned'", [id])?;
        }
        tx.commit()?;
        Ok(ids)
    }

    fn feedback(&self, range: ExportRange) -> Result<Vec<FeedbackRecord>> {
        let mut stmt = self.conn.prepare(&format!(
            "SELECT {FEEDBACK_COLS} FROM feedback WHERE seq >= ?1 AND seq < ?2 ORDER BY seq"
        ))?;
        let rows = stmt.query_map(
            params![range.from.unwrap_or(i64::MIN), range.to.unwrap_or(i64::MAX)],
            Self::feedback_row,
        )?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    fn entity_count(&self) -> Result<u64> {
        let n: i64 = self.conn.query_row(
            "SELECT (SELECT COUNT(*) FROM policies) + (SELECT COUNT(*) FROM accounts) + (SELECT COUNT(*) FROM sessions)",
            [],
            |r| r.get(0),
        )?;
        Ok(n as u64)
    }
}
