//! Central service of the evaluation arena.
//!
//! Policies register behind a conformance probe and wait for an operator to
//! activate them. Evaluators request sessions and receive two opaque endpoint
//! handles, relayed through the server, in random A/B order; they never learn
//! which policies they compared. Feedback completes a session and earns the
//! evaluator a credit, which can buy comparisons involving their own policy.
//! Leaderboards are fit on demand from the stored feedback.

pub mod clock;
pub mod error;
pub mod http;
pub mod service;
pub mod store;
pub mod types;

pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{ArenaError, Result};
pub use http::router;
pub use service::{leaderboard_scores, spawn_expiry_task, Arena, ArenaConfig, PolicyBackend};
pub use store::{SqliteStore, Store};
pub use types::*;
