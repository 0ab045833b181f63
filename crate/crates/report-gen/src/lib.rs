//! Qualitative policy reports from arena evaluations.
//!
//! Episodes are categorized by a vision model from their first frames and
//! instruction. For each policy, the categorized episodes and evaluator
//! feedback become a prompt for a language model that writes a nine-section
//! report citing sessions as `<ref>UUID</ref>`, and then a bullet summary.
//! Every citation is checked against the sessions actually provided.

pub mod category;
pub mod dossier;
pub mod error;
pub mod model;
pub mod prompt;
pub mod refs;
pub mod report;

pub use category::TaskCategory;
pub use dossier::{
    build_dossiers, category_winrates, read_sidecar, Categorization, CategoryRecord, EpisodeDossier, HeadToHead,
    SidecarEntry, Side,
};
pub use error::{ReportError, CITATION_RULE};
pub use model::{
    serve_stub_model, ChatMessage, ChatRequest, ContentPart, HttpModelClient, ModelClient, ModelConfig, ModelError,
    StubModel, StubModelServer,
};
pub use refs::{extract_refs, is_full_uuid, validate_refs, RefViolation, ViolationKind};
pub use report::{parse_categorization, parse_sections, parse_summary, Episode, Frame, PolicyReport, Reporter, Section, SummaryReport};
