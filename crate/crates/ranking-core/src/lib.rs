//! Pairwise policy ranking.
//!
//! A latent-bucket Bradley-Terry model with Davidson-style ties, fit by EM,
//! together with the usual baselines (offline BT, Elo, mean progress) and
//! metrics for comparing a ranking to an oracle.
//!
//! Everything here is a pure function of its inputs and an explicit seed.

pub mod baselines;
pub mod em;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod params;
pub mod record;

pub use baselines::{bt_mle, elo, progress_ranking, rank, BtConfig, EloConfig, RankingConfig, RankingMethod, RankingScores};
pub use em::{e_step, fit_em, fit_em_partial, grad_hess, log_likelihood, m_step, q_objective, EmModel, FitResult, Gradients, MStep, Responsibilities};
pub use error::{RankingError, Result};
pub use metrics::{average_ranks, mmrv, pearson_r, rank_from_scores, spearman};
pub use model::{marginal_prob, outcome_probs, sigmoid, softplus, OutcomeProbs};
pub use params::{EmConfig, ModelParams, PartialTerm};
pub use record::{Dataset, LabeledDataset, LabeledRecord, Outcome, PreferenceRecord};
