//! Pairwise preference records and datasets.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RankingError, Result};

/// Result of an A/B trial from the point of view of side A (`policy_i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Loss = 0,
    Tie = 1,
    Win = 2,
}

impl Outcome {
    /// Score of side A on the usual 1 / 0.5 / 0 scale.
    pub fn score(self) -> f64 {
        match self {
            Outcome::Win => 1.0,
            Outcome::Tie => 0.5,
            Outcome::Loss => 0.0,
        }
    }

    /// The same trial seen from side B.
    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Win => Outcome::Loss,
            Outcome::Tie => Outcome::Tie,
            Outcome::Loss => Outcome::Win,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Win => "win",
            Outcome::Tie => "tie",
            Outcome::Loss => "loss",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "win" | "2" => Ok(Outcome::Win),
            "tie" | "1" => Ok(Outcome::Tie),
            "loss" | "0" => Ok(Outcome::Loss),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

/// One A/B trial. Progress values are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub trial_id: String,
    pub policy_i: usize,
    pub policy_j: usize,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_label: Option<String>,
}

impl PreferenceRecord {
    pub fn new(
        trial_id: impl Into<String>,
        policy_i: usize,
        policy_j: usize,
        outcome: Outcome,
    ) -> Result<Self> {
        let record = PreferenceRecord {
            trial_id: trial_id.into(),
            policy_i,
            policy_j,
            outcome,
            progress_i: None,
            progress_j: None,
            task_label: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn with_progress(mut self, progress_i: f64, progress_j: f64) -> Result<Self> {
        self.progress_i = Some(progress_i);
        self.progress_j = Some(progress_j);
        self.validate()?;
        Ok(self)
    }

    pub fn with_task_label(mut self, label: impl Into<String>) -> Self {
        self.task_label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.policy_i == self.policy_j {
            return Err(RankingError::SelfComparison {
                trial_id: self.trial_id.clone(),
                policy: self.policy_i,
            });
        }
        for value in [self.progress_i, self.progress_j].into_iter().flatten() {
            if !(0.0..=1.0).contains(&value) {
                return Err(RankingError::ProgressOutOfRange {
                    trial_id: self.trial_id.clone(),
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn has_progress(&self) -> bool {
        self.progress_i.is_some() || self.progress_j.is_some()
    }

    /// Swap A and B, flipping the outcome accordingly.
    pub fn swapped(&self) -> PreferenceRecord {
        PreferenceRecord {
            trial_id: self.trial_id.clone(),
            policy_i: self.policy_j,
            policy_j: self.policy_i,
            outcome: self.outcome.flipped(),
            progress_i: self.progress_j,
            progress_j: self.progress_i,
            task_label: self.task_label.clone(),
        }
    }
}

/// A validated collection of records over policies `0..num_policies`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    num_policies: usize,
    records: Vec<PreferenceRecord>,
}

impl Dataset {
    pub fn new(num_policies: usize, records: Vec<PreferenceRecord>) -> Result<Self> {
        for record in &records {
            record.validate()?;
            for index in [record.policy_i, record.policy_j] {
                if index >= num_policies {
                    return Err(RankingError::PolicyOutOfRange {
                        trial_id: record.trial_id.clone(),
                        index,
                        num_policies,
                    });
                }
            }
        }
        Ok(Dataset {
            num_policies,
            records,
        })
    }

    /// Builds a dataset sized to the largest referenced policy index.
    pub fn from_records(records: Vec<PreferenceRecord>) -> Result<Self> {
        let num_policies = records
            .iter()
            .map(|r| r.policy_i.max(r.policy_j) + 1)
            .max()
            .unwrap_or(0);
        Dataset::new(num_policies, records)
    }

    pub fn num_policies(&self) -> usize {
        self.num_policies
    }

    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<PreferenceRecord> {
        self.records
    }

    /// Number of distinct policies that appear in at least one record.
    pub fn distinct_policies(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| [r.policy_i, r.policy_j])
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Prefix of the first `n` records, keeping the policy count.
    pub fn prefix(&self, n: usize) -> Dataset {
        Dataset {
            num_policies: self.num_policies,
            records: self.records[..n.min(self.records.len())].to_vec(),
        }
    }

    pub(crate) fn require_fit_input(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(RankingError::EmptyDataset);
        }
        if self.distinct_policies() < 2 {
            return Err(RankingError::SinglePolicy);
        }
        Ok(())
    }
}

/// A record whose policies are named by opaque string labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub trial_id: String,
    pub policy_i: String,
    pub policy_j: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_label: Option<String>,
}

/// Dataset plus the label of each policy index.
///
/// Labels are ordered numerically when every label is an unsigned integer and
/// lexicographically otherwise, so two parties that see the same set of labels
/// always agree on the index assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub labels: Vec<String>,
    pub dataset: Dataset,
}

impl LabeledDataset {
    pub fn from_labeled(records: &[LabeledRecord]) -> Result<Self> {
        let mut labels: Vec<String> = records
            .iter()
            .flat_map(|r| [r.policy_i.clone(), r.policy_j.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        sort_labels(&mut labels);
        let index: HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let converted = records
            .iter()
            .map(|r| PreferenceRecord {
                trial_id: r.trial_id.clone(),
                policy_i: index[r.policy_i.as_str()],
                policy_j: index[r.policy_j.as_str()],
                outcome: r.outcome,
                progress_i: r.progress_i,
                progress_j: r.progress_j,
                task_label: r.task_label.clone(),
            })
            .collect();
        let dataset = Dataset::new(labels.len(), converted)?;
        Ok(LabeledDataset { labels, dataset })
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

fn sort_labels(labels: &mut [String]) {
    let numeric: Option<Vec<u64>> = labels.iter().map(|l| l.parse::<u64>().ok()).collect();
    if numeric.is_some() {
        labels.sort_by_key(|l| l.parse::<u64>().unwrap_or(u64::MAX));
    } else {
        labels.sort();
    }
}
