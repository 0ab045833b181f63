//! Reference ranking methods: offline Bradley-Terry, Elo, and progress averaging.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::em::{fit_em, fit_em_partial};
use crate::error::{RankingError, Result};
use crate::model::sigmoid;
use crate::params::EmConfig;
use crate::record::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMethod {
    TaskEm,
    Bt,
    Elo,
    Progress,
}

impl RankingMethod {
    pub const ALL: [RankingMethod; 4] = [
        RankingMethod::TaskEm,
        RankingMethod::Bt,
        RankingMethod::Elo,
        RankingMethod::Progress,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RankingMethod::TaskEm => "task_em",
            RankingMethod::Bt => "bt",
            RankingMethod::Elo => "elo",
            RankingMethod::Progress => "progress",
        }
    }
}

impl fmt::Display for RankingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankingMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "task_em" | "task" | "em" => Ok(RankingMethod::TaskEm),
            "bt" => Ok(RankingMethod::Bt),
            "elo" => Ok(RankingMethod::Elo),
            "progress" | "prog" => Ok(RankingMethod::Progress),
            other => Err(format!("unknown ranking method {other:?}")),
        }
    }
}

/// One score per policy, higher is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingScores {
    pub scores: Vec<f64>,
    pub method: RankingMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BtConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for BtConfig {
    fn default() -> Self {
        BtConfig {
            learning_rate: 0.05,
            l2: 1e-2,
            max_iters: 2000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EloConfig {
    pub k_factor: f64,
    /// Multiplies the rating difference inside the sigmoid. 1.0 gives the
    /// natural-log scale; `ln(10) / 400` gives chess-style ratings.
    pub scale: f64,
}

impl Default for EloConfig {
    fn default() -> Self {
        EloConfig {
            k_factor: 32.0,
            scale: 1.0,
        }
    }
}

/// Configuration for every method, used by [`rank`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingConfig {
    pub em: EmConfig,
    pub bt: BtConfig,
    pub elo: EloConfig,
    /// Fit TASK with the partial-success term when progress data is present.
    pub task_uses_progress: bool,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            em: EmConfig::default(),
            bt: BtConfig::default(),
            elo: EloConfig::default(),
            task_uses_progress: true,
        }
    }
}

/// Offline BT maximum likelihood by gradient ascent. Ties count as half a win.
///
/// The likelihood gradient is averaged over records so one learning rate
/// works across dataset sizes.
pub fn bt_mle(dataset: &Dataset, config: &BtConfig) -> Result<RankingScores> {
    if dataset.is_empty() {
        return Err(RankingError::EmptyDataset);
    }
    if !(config.learning_rate > 0.0) || !(config.l2 >= 0.0) {
        return Err(RankingError::InvalidConfig(
            "bt learning_rate must be positive and l2 nonnegative".into(),
        ));
    }
    let n = dataset.num_policies();
    let m = dataset.len() as f64;
    let mut theta = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for _ in 0..config.max_iters {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for r in dataset.records() {
            let resid = r.outcome.score() - sigmoid(theta[r.policy_i] - theta[r.policy_j]);
            grad[r.policy_i] += resid;
            grad[r.policy_j] -= resid;
        }
        let mut max_change: f64 = 0.0;
        for p in 0..n {
            let step = config.learning_rate * (grad[p] / m - config.l2 * theta[p]);
            theta[p] += step;
            max_change = max_change.max(step.abs());
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(RankingError::NonFinite("bt theta"));
        }
        if max_change < config.tol {
            break;
        }
    }
    Ok(RankingScores {
        scores: theta,
        method: RankingMethod::Bt,
    })
}

/// One pass of Elo updates in record order, from all-zero ratings.
pub fn elo(dataset: &Dataset, config: &EloConfig) -> RankingScores {
    let mut theta = vec![0.0; dataset.num_policies()];
    for r in dataset.records() {
        let expected = sigmoid(config.scale * (theta[r.policy_i] - theta[r.policy_j]));
        let delta = config.k_factor * (r.outcome.score() - expected);
        theta[r.policy_i] += delta;
        theta[r.policy_j] -= delta;
    }
    RankingScores {
        scores: theta,
        method: RankingMethod::Elo,
    }
}

/// Mean progress of each policy over every rollout it took part in.
pub fn progress_ranking(dataset: &Dataset) -> Result<RankingScores> {
    let n = dataset.num_policies();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for r in dataset.records() {
        for (p, s) in [(r.policy_i, r.progress_i), (r.policy_j, r.progress_j)] {
            if let Some(s) = s {
                sums[p] += s;
                counts[p] += 1;
            }
        }
    }
    if let Some(policy) = counts.iter().position(|&c| c == 0) {
        return Err(RankingError::MissingProgress { policy });
    }
    let scores = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    Ok(RankingScores {
        scores,
        method: RankingMethod::Progress,
    })
}

/// Scores the dataset with the requested method.
pub fn rank(dataset: &Dataset, method: RankingMethod, config: &RankingConfig) -> Result<RankingScores> {
    match method {
        RankingMethod::TaskEm => {
            let fit = if config.task_uses_progress && dataset.records().iter().any(|r| r.has_progress()) {
                fit_em_partial(dataset, &config.em)?
            } else {
                fit_em(dataset, &config.em)?
            };
            Ok(RankingScores {
                scores: fit.params.theta,
                method,
            })
        }
        RankingMethod::Bt => bt_mle(dataset, &config.bt),
        RankingMethod::Elo => {
            if dataset.is_empty() {
                return Err(RankingError::EmptyDataset);
            }
            Ok(elo(dataset, &config.elo))
        }
        RankingMethod::Progress => {
            if dataset.is_empty() {
                return Err(RankingError::EmptyDataset);
            }
            progress_ranking(dataset)
        }
    }
}
