use thiserror::Error;

use crate::model::ModelError;
use crate::refs::RefViolation;

/// The citation rule given to the model, repeated in validation errors.
pub const CITATION_RULE: &str =
    "cite the full session ID exactly as provided; do not shorten, truncate or modify it in any way, and do not invent session IDs";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("no category in the model's answer after {attempts} attempt(s); last answer: {last:?}")]
    Unparseable { attempts: usize, last: String },

    #[error("report violates the citation rule ({CITATION_RULE}): {}", list(.0))]
    Citations(Vec<RefViolation>),

    #[error("report format: {0}")]
    Format(String),

    #[error("a report needs at least one episode")]
    NoEpisodes,

    #[error("bad input: {0}")]
    Input(String),
}

fn list(violations: &[RefViolation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
