use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::category::TaskCategory;
use crate::dossier::{Categorization, EpisodeDossier};
use crate::error::ReportError;
use crate::model::{ChatMessage, ChatRequest, ContentPart, ModelClient, ModelConfig};
use crate::prompt::{render_categorize, render_full_report, render_summary, SECTIONS};
use crate::refs::{extract_refs, validate_refs};

/// One camera frame as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub mime: String,
    pub bytes: Vec<u8>,
}

impl Frame {
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        let mime = match ext.as_str() {
            "png" => "image/png",
            "jpg" | "jpeg" => "image/jpeg",
            "webp" => "image/webp",
            "gif" => "image/gif",
            _ => return Err(ReportError::Input(format!("{}: unsupported image type", path.display()))),
        };
        let bytes = std::fs::read(path).map_err(|e| ReportError::Input(format!("{}: {e}", path.display())))?;
        Ok(Frame {
            mime: mime.into(),
            bytes,
        })
    }
}

/// What the categorizer needs for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub session_id: String,
    pub instruction: String,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy_id: String,
    pub policy_name: String,
    pub text: String,
    pub sections: Vec<Section>,
    /// Sessions the report was allowed to cite.
    pub session_ids: Vec<String>,
    /// Distinct sessions it did cite, in order of first citation.
    pub citations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub policy_id: String,
    pub text: String,
    pub bullets: Vec<Section>,
}

/// Reads `Category: <name>` (or a bare name) on the first non-empty line and
/// treats the rest, minus an optional `Scene:` label, as the description.
pub fn parse_categorization(answer: &str) -> Result<Categorization, String> {
    let mut lines = answer.trim().lines();
    let first = lines.next().unwrap_or("").trim();
    let name = first.strip_prefix("Category:").map(str::trim).unwrap_or(first);
    let category: TaskCategory = name.parse()?;
    let rest: Vec<&str> = lines.collect();
    let rest = rest.join("\n");
    let rest = rest.trim();
    let scene = rest.strip_prefix("Scene:").unwrap_or(rest).trim().to_string();
    Ok(Categorization { category, scene })
}

fn heading_of(line: &str) -> Option<(usize, &str)> {
    let s = line.trim().trim_start_matches('#').trim_start().trim_start_matches("**");
    let dot = s.find('.')?;
    let number: usize = s[..dot].parse().ok()?;
    let name = s[dot + 1..].trim().trim_matches('*').trim_end_matches(':').trim_matches('*').trim();
    (1..=SECTIONS.len()).contains(&number).then_some((number, name)).filter(|(n, name)| SECTIONS[n - 1] == *name)
}

/// Splits a full report into its nine numbered sections; all must be present,
/// once each, in order. Text before the first heading is ignored.
pub fn parse_sections(text: &str) -> Result<Vec<Section>, ReportError> {
    let mut found: Vec<(usize, Section)> = Vec::new();
    for line in text.lines() {
        if let Some((number, name)) = heading_of(line) {
            found.push((
                number,
                Section {
                    heading: name.to_string(),
                    body: String::new(),
                },
            ));
        } else if let Some((_, section)) = found.last_mut() {
            section.body.push_str(line);
            section.body.push('\n');
        }
    }
    let numbers: Vec<usize> = found.iter().map(|(n, _)| *n).collect();
    let expected: Vec<usize> = (1..=SECTIONS.len()).collect();
    if numbers != expected {
        let missing: Vec<&str> = (1..=SECTIONS.len())
            .filter(|n| !numbers.contains(n))
            .map(|n| SECTIONS[n - 1])
            .collect();
        return Err(ReportError::Format(format!(
            "section headings must be 1-9 in order; found {numbers:?}, missing {missing:?}"
        )));
    }
    Ok(found
        .into_iter()
        .map(|(_, mut s)| {
            s.body = s.body.trim().to_string();
            s
        })
        .collect())
}

/// Parses `- Heading: text` bullets; the headings must be exactly the nine
/// section names in order, with nothing before the first bullet.
pub fn parse_summary(text: &str) -> Result<Vec<Section>, ReportError> {
    let mut bullets: Vec<Section> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(item) = trimmed.strip_prefix("- ") {
            let (heading, body) = item.split_once(':').unwrap_or((item, ""));
            bullets.push(Section {
                heading: heading.trim().to_string(),
                body: body.trim().to_string(),
            });
        } else if trimmed.is_empty() {
            continue;
        } else if let Some(last) = bullets.last_mut() {
            last.body.push('\n');
            last.body.push_str(trimmed);
        } else {
            return Err(ReportError::Format(format!("text before the first bullet: {trimmed:?}")));
        }
    }
    let headings: Vec<&str> = bullets.iter().map(|b| b.heading.as_str()).collect();
    if headings != SECTIONS {
        let missing: Vec<&str> = SECTIONS.iter().copied().filter(|s| !headings.contains(s)).collect();
        return Err(ReportError::Format(format!(
            "summary bullets must be {SECTIONS:?} in order; found {headings:?}, missing {missing:?}"
        )));
    }
    Ok(bullets)
}

const RETRY_NOTE: &str = "That category is not one of the listed names. Answer again in the required format, \
copying one category name exactly as written.";

/// Talks to the configured models.
pub struct Reporter {
    client: Arc<dyn ModelClient>,
    config: ModelConfig,
}

impl Reporter {
    pub fn new(client: Arc<dyn ModelClient>, config: ModelConfig) -> Self {
        Reporter { client, config }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Asks the vision model for a category and scene description, retrying
    /// up to `config.retries` times when the category is not verbatim.
    pub async fn categorize_episode(&self, frames: &[Frame], instruction: &str) -> Result<Categorization, ReportError> {
        let mut content = vec![ContentPart::text(render_categorize(instruction))];
        content.extend(frames.iter().map(|f| ContentPart::image(&f.mime, &f.bytes)));
        let mut request = ChatRequest {
            model: self.config.vision_model.clone(),
            messages: vec![ChatMessage::user(content)],
        };
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for _ in 0..attempts {
            last = self.client.complete(&request).await?;
            match parse_categorization(&last) {
                Ok(c) => return Ok(c),
                Err(_) => {
                    request.messages.push(ChatMessage::assistant(last.clone()));
                    request.messages.push(ChatMessage::user(vec![ContentPart::text(RETRY_NOTE)]));
                }
            }
        }
        Err(ReportError::Unparseable { attempts, last })
    }

    /// Categorizes episodes with at most `config.max_in_flight` requests
    /// outstanding; results keep the input order.
    pub async fn categorize_all(&self, episodes: &[Episode]) -> Vec<Result<Categorization, ReportError>> {
        stream::iter(episodes)
            .map(|e| self.categorize_episode(&e.frames, &e.instruction))
            .buffered(self.config.max_in_flight.max(1))
            .collect()
            .await
    }

    pub async fn build_full_report(
        &self,
        policy_id: &str,
        policy_name: &str,
        dossiers: &[EpisodeDossier],
    ) -> Result<PolicyReport, ReportError> {
        if dossiers.is_empty() {
            return Err(ReportError::NoEpisodes);
        }
        let request = ChatRequest {
            model: self.config.report_model.clone(),
            messages: vec![ChatMessage::user(vec![ContentPart::text(render_full_report(policy_name, dossiers))])],
        };
        let text = self.client.complete(&request).await?;
        let session_ids: Vec<String> = dossiers.iter().map(|d| d.session_id.clone()).collect();
        let known: HashSet<String> = session_ids.iter().cloned().collect();
        let violations = validate_refs(&text, &known);
        if !violations.is_empty() {
            return Err(ReportError::Citations(violations));
        }
        let sections = parse_sections(&text)?;
        let mut citations: Vec<String> = Vec::new();
        for (_, id) in extract_refs(&text) {
            if !citations.iter().any(|c| c == id) {
                citations.push(id.to_string());
            }
        }
        Ok(PolicyReport {
            policy_id: policy_id.to_string(),
            policy_name: policy_name.to_string(),
            text,
            sections,
            session_ids,
            citations,
        })
    }

    pub async fn summarize_report(&self, full: &PolicyReport) -> Result<SummaryReport, ReportError> {
        let request = ChatRequest {
            model: self.config.report_model.clone(),
            messages: vec![ChatMessage::user(vec![ContentPart::text(render_summary(&full.text))])],
        };
        let text = self.client.complete(&request).await?;
        let bullets = parse_summary(&text)?;
        let known: HashSet<String> = full.session_ids.iter().cloned().collect();
        let violations = validate_refs(&text, &known);
        if !violations.is_empty() {
            return Err(ReportError::Citations(violations));
        }
        Ok(SummaryReport {
            policy_id: full.policy_id.clone(),
            text,
            bullets,
        })
    }
}
