//! Dataset ingestion (CSV, JSON lines) and fit-result export.
//!
//! CSV columns: `trial_id, policy_i, policy_j, outcome, progress_i, progress_j,
//! task_label`. `outcome` is one of `win`, `tie`, `loss` from side A's point of
//! view; empty progress cells mean the value is absent.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Deserializer};

use crate::em::FitResult;
use crate::error::{RankingError, Result};
use crate::record::{LabeledDataset, LabeledRecord, Outcome};

pub const CSV_HEADER: [&str; 7] = [
    "trial_id",
    "policy_i",
    "policy_j",
    "outcome",
    "progress_i",
    "progress_j",
    "task_label",
];

fn csv_error(err: csv::Error) -> RankingError {
    let line = err.position().map_or(0, |p| p.line() as usize);
    RankingError::Parse {
        line,
        message: err.to_string(),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<LabeledRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(RankingError::Parse {
            line: 1,
            message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut records = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(csv_error)?;
        records.push(row.into());
    }
    Ok(records)
}

pub fn write_csv<W: Write>(writer: W, records: &[LabeledRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in records {
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        wtr.write_record([
            r.trial_id.as_str(),
            r.policy_i.as_str(),
            r.policy_j.as_str(),
            r.outcome.as_str(),
            &fmt_opt(r.progress_i),
            &fmt_opt(r.progress_j),
            r.task_label.as_deref().unwrap_or(""),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads one JSON object per line; blank lines are skipped. Policy labels may
/// be strings or nonnegative integers.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<LabeledRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| RankingError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(row.into());
    }
    Ok(records)
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[LabeledRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| RankingError::Io(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Validates and indexes records read by [`read_csv`] or [`read_jsonl`].
pub fn to_dataset(records: &[LabeledRecord]) -> Result<LabeledDataset> {
    LabeledDataset::from_labeled(records)
}

pub fn write_fit_result<W: Write>(writer: W, fit: &FitResult) -> Result<()> {
    serde_json::to_writer_pretty(writer, fit).map_err(|e| RankingError::Io(e.to_string()))
}

pub fn read_fit_result<R: Read>(reader: R) -> Result<FitResult> {
    serde_json::from_reader(reader).map_err(|e| RankingError::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Deserialize)]
struct CsvRow {
    trial_id: String,
    policy_i: String,
    policy_j: String,
    outcome: Outcome,
    progress_i: Option<f64>,
    progress_j: Option<f64>,
    task_label: Option<String>,
}

impl From<CsvRow> for LabeledRecord {
    fn from(r: CsvRow) -> Self {
        LabeledRecord {
            trial_id: r.trial_id,
            policy_i: r.policy_i,
            policy_j: r.policy_j,
            outcome: r.outcome,
            progress_i: r.progress_i,
            progress_j: r.progress_j,
            task_label: r.task_label.filter(|s| !s.is_empty()),
        }
    }
}

#[derive(Deserialize)]
struct JsonRow {
    trial_id: String,
    #[serde(deserialize_with = "label")]
    policy_i: String,
    #[serde(deserialize_with = "label")]
    policy_j: String,
    outcome: Outcome,
    #[serde(default)]
    progress_i: Option<f64>,
    #[serde(default)]
    progress_j: Option<f64>,
    #[serde(default)]
    task_label: Option<String>,
}

impl From<JsonRow> for LabeledRecord {
    fn from(r: JsonRow) -> Self {
        LabeledRecord {
            trial_id: r.trial_id,
            policy_i: r.policy_i,
            policy_j: r.policy_j,
            outcome: r.outcome,
            progress_i: r.progress_i,
            progress_j: r.progress_j,
            task_label: r.task_label,
        }
    }
}

fn label<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Label {
        Text(String),
        Index(u64),
    }
    Ok(match Label::deserialize(d)? {
        Label::Text(s) => s,
        Label::Index(i) => i.to_string(),
    })
}
