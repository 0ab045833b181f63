//! Per-episode evidence for one policy, assembled from the arena export.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use ranking_core::{LabeledRecord, Outcome};
use serde::{Deserialize, Serialize};

use crate::category::TaskCategory;
use crate::error::ReportError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorization {
    pub category: TaskCategory,
    pub scene: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// How the policy fared in one A/B session, from its own point of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadToHead {
    pub opponent: String,
    pub side: Side,
    pub outcome: Outcome,
    pub own_progress: Option<f64>,
    pub opponent_progress: Option<f64>,
    pub explanation: String,
}

impl HeadToHead {
    pub fn summary(&self) -> String {
        let verb = match self.outcome {
            Outcome::Win => "Won against",
            Outcome::Tie => "Tied with",
            Outcome::Loss => "Lost to",
        };
        let side = match self.side {
            Side::A => "A",
            Side::B => "B",
        };
        let progress = match (self.own_progress, self.opponent_progress) {
            (Some(own), Some(other)) => format!(" (task progress {:.0}% vs. {:.0}%)", own * 100.0, other * 100.0),
            _ => String::new(),
        };
        format!(
            "{verb} {} while running as Policy {side}{progress}. Evaluator feedback: {}",
            self.opponent, self.explanation
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDossier {
    pub session_id: String,
    pub instruction: String,
    pub category: TaskCategory,
    pub scene: String,
    pub result: HeadToHead,
}

/// The free-text part of the export, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub trial_id: String,
    pub instruction: String,
    pub explanation: String,
    #[serde(default)]
    pub media_refs: Vec<String>,
}

pub fn read_sidecar<R: BufRead>(reader: R) -> Result<Vec<SidecarEntry>, ReportError> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ReportError::Input(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ReportError::Input(format!("sidecar line {}: {e}", k + 1)))?);
    }
    Ok(out)
}

/// Dossiers for every session `policy_id` took part in, in export order.
/// Every such session needs a sidecar entry and a categorization.
pub fn build_dossiers(
    policy_id: &str,
    records: &[LabeledRecord],
    sidecar: &[SidecarEntry],
    categories: &HashMap<String, Categorization>,
    names: &HashMap<String, String>,
) -> Result<Vec<EpisodeDossier>, ReportError> {
    let text: HashMap<&str, &SidecarEntry> = sidecar.iter().map(|s| (s.trial_id.as_str(), s)).collect();
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for r in records {
        let (side, opponent, outcome, own, other) = if r.policy_i == policy_id {
            (Side::A, &r.policy_j, r.outcome, r.progress_i, r.progress_j)
        } else if r.policy_j == policy_id {
            (Side::B, &r.policy_i, r.outcome.flipped(), r.progress_j, r.progress_i)
        } else {
            continue;
        };
        let (Some(entry), Some(cat)) = (text.get(r.trial_id.as_str()), categories.get(&r.trial_id)) else {
            missing.push(r.trial_id.clone());
            continue;
        };
        out.push(EpisodeDossier {
            session_id: r.trial_id.clone(),
            instruction: entry.instruction.clone(),
            category: cat.category,
            scene: cat.scene.clone(),
            result: HeadToHead {
                opponent: names.get(opponent).cloned().unwrap_or_else(|| opponent.clone()),
                side,
                outcome,
                own_progress: own,
                opponent_progress: other,
                explanation: entry.explanation.clone(),
            },
        });
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(ReportError::Input(format!(
            "sessions without sidecar text or categorization: {}",
            missing.join(", ")
        )))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

impl CategoryRecord {
    pub fn total(&self) -> usize {
        self.wins + self.ties + self.losses
    }

    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.total() as f64
    }

    pub fn tie_rate(&self) -> f64 {
        self.ties as f64 / self.total() as f64
    }

    pub fn loss_rate(&self) -> f64 {
        self.losses as f64 / self.total() as f64
    }
}

/// Win/tie/loss tallies per category; categories without episodes are absent.
pub fn category_winrates(dossiers: &[EpisodeDossier]) -> BTreeMap<TaskCategory, CategoryRecord> {
    let mut out: BTreeMap<TaskCategory, CategoryRecord> = BTreeMap::new();
    for d in dossiers {
        let rec = out.entry(d.category).or_default();
        match d.result.outcome {
            Outcome::Win => rec.wins += 1,
            Outcome::Tie => rec.ties += 1,
            Outcome::Loss => rec.losses += 1,
        }
    }
    out
}
