//! Synthetic ground truth for the arena.
//!
//! [`world`] draws latent-bucket worlds and simulates A/B trials from them,
//! [`env`] is a toy environment that scores action chunks from live policy
//! servers, and [`experiment`] measures how well each ranking method recovers
//! the oracle ordering.

pub mod env;
pub mod experiment;
pub mod world;

pub use env::SyntheticEnv;
pub use experiment::{
    drift_comparisons, evaluate, preference_progress_divergence, run_drift_experiment, run_ranking_experiment,
    uniform_comparisons, DriftSchedule, ExperimentConfig, ExperimentReport, SummaryRow, TrialRow, REGULAR,
};
pub use world::{
    oracle_scores, sample_pair, sample_world, sample_world_with, simulate_comparison, simulate_in_bucket,
    synthetic_env_step, WorldConfig, WorldSpec,
};
