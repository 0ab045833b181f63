//! Evaluator-side workflow for the arena.
//!
//! A session asks the server for a blind pair of anonymized endpoints, drives
//! policy A and then policy B on the same simulated scene with the same
//! instruction, collects progress, a preference and an explanation (from a
//! person, an answer file, or the simulator), and submits the feedback.

pub mod api;
pub mod error;
pub mod rollout;
pub mod script;
pub mod session;

pub use api::ArenaClient;
pub use error::ClientError;
pub use rollout::{rollout, Abort, Stepper, Trace};
pub use script::{InputMode, Judgement, LinePrompter, Prompter, ScriptedAnswers, SessionScript};
pub use session::{run_session, run_session_with_hook, scene_seed, SessionOutcome, TASKS};
