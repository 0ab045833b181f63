use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use arena_server::Preference;
use serde::{Deserialize, Serialize};

use crate::error::ClientError;

/// Where the evaluator's judgements come from.
pub enum InputMode {
    /// Ask a person on the terminal.
    Interactive(Box<dyn Prompter>),
    /// Read answers from a JSON file (see [`ScriptedAnswers`]).
    Scripted(PathBuf),
    /// Derive everything from the simulated environment: progress is what the
    /// environment measured and the preference follows progress.
    Simulated { instruction: Option<String> },
}

pub struct SessionScript {
    pub server: String,
    pub evaluator_id: String,
    pub max_steps: usize,
    /// Deadline for each policy call and each arena request.
    pub timeout: Duration,
    pub input: InputMode,
    /// Spend a credit to evaluate this owned policy against a random opponent.
    pub own_policy: Option<String>,
    /// Rollout traces are written here and referenced as media.
    pub trace_dir: PathBuf,
    /// Seeds the simulated scene (combined with the session id).
    pub seed: u64,
}

impl SessionScript {
    pub fn new(server: impl Into<String>, evaluator_id: impl Into<String>, input: InputMode) -> Self {
        SessionScript {
            server: server.into(),
            evaluator_id: evaluator_id.into(),
            max_steps: 20,
            timeout: Duration::from_secs(10),
            input,
            own_policy: None,
            trace_dir: PathBuf::from("traces"),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let mut problems = Vec::new();
        if self.max_steps == 0 {
            problems.push("max_steps must be at least 1".to_string());
        }
        if self.timeout.is_zero() {
            problems.push("timeout must be positive".to_string());
        }
        if self.evaluator_id.trim().is_empty() {
            problems.push("evaluator_id must be non-empty".to_string());
        }
        if policy_gateway::normalize_endpoint(&self.server).is_err() {
            problems.push(format!("server {:?} is not an http(s) URL", self.server));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ClientError::Validation(problems))
        }
    }
}

/// Answer file for scripted mode. A missing progress value is filled in from
/// the simulated environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAnswers {
    pub instruction: String,
    #[serde(default)]
    pub progress_a: Option<i64>,
    #[serde(default)]
    pub progress_b: Option<i64>,
    pub preference: String,
    pub explanation: String,
}

/// Validated judgement for one A/B pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Judgement {
    pub progress_a: Option<i64>,
    pub progress_b: Option<i64>,
    pub preference: Preference,
    pub explanation: String,
}

impl ScriptedAnswers {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
        serde_json::from_str(&text).map_err(|e| ClientError::Validation(vec![format!("{}: {e}", path.display())]))
    }

    pub fn validate(&self) -> Result<Judgement, ClientError> {
        let mut problems = Vec::new();
        if self.instruction.trim().is_empty() {
            problems.push("instruction must be non-empty".to_string());
        }
        for (name, value) in [("progress_a", self.progress_a), ("progress_b", self.progress_b)] {
            if let Some(v) = value {
                if let Err(p) = parse_progress(&v.to_string()) {
                    problems.push(format!("{name}: {p}"));
                }
            }
        }
        let preference = parse_preference(&self.preference).map_err(|p| problems.push(p)).ok();
        if let Err(p) = parse_explanation(&self.explanation) {
            problems.push(p);
        }
        match preference {
            Some(preference) if problems.is_empty() => Ok(Judgement {
                progress_a: self.progress_a,
                progress_b: self.progress_b,
                preference,
                explanation: self.explanation.trim().to_string(),
            }),
            _ => Err(ClientError::Validation(problems)),
        }
    }
}

pub fn parse_progress(input: &str) -> Result<i64, String> {
    match input.trim().parse::<i64>() {
        Ok(v) if (0..=100).contains(&v) => Ok(v),
        Ok(v) => Err(format!("progress {v} is outside 0..=100")),
        Err(_) => Err(format!("progress {:?} is not an integer", input.trim())),
    }
}

/// Accepts `A`, `B`, `T` or `tie`, in any case.
pub fn parse_preference(input: &str) -> Result<Preference, String> {
    match input.trim().to_ascii_lowercase().as_str() {
        "a" => Ok(Preference::A),
        "b" => Ok(Preference::B),
        "t" | "tie" => Ok(Preference::Tie),
        other => Err(format!("preference {other:?} is not one of A, B, tie")),
    }
}

pub fn parse_explanation(input: &str) -> Result<String, String> {
    let text = input.trim();
    if text.is_empty() {
        Err("explanation must be non-empty".to_string())
    } else {
        Ok(text.to_string())
    }
}

/// A source of free-text answers for interactive mode.
pub trait Prompter {
    fn ask(&mut self, question: &str) -> Result<String, ClientError>;
}

/// Prompts on one stream and reads lines from another (normally the terminal).
pub struct LinePrompter<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> LinePrompter<R, W> {
    pub fn new(input: R, output: W) -> Self {
        LinePrompter { input, output }
    }
}

impl<R: BufRead, W: Write> Prompter for LinePrompter<R, W> {
    fn ask(&mut self, question: &str) -> Result<String, ClientError> {
        write!(self.output, "{question} ")?;
        self.output.flush()?;
        let mut line = String::new();
        if self.input.read_line(&mut line)? == 0 {
            return Err(ClientError::Validation(vec!["input ended before all answers were given".into()]));
        }
        Ok(line.trim_end_matches(['\r', '\n']).to_string())
    }
}

const ATTEMPTS: usize = 3;

/// Asks until `parse` accepts the answer, giving up after a few tries.
pub fn ask_until<T>(
    prompter: &mut dyn Prompter,
    question: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, ClientError> {
    let mut problems = Vec::new();
    for _ in 0..ATTEMPTS {
        match parse(&prompter.ask(question)?) {
            Ok(v) => return Ok(v),
            Err(p) => problems.push(p),
        }
    }
    Err(ClientError::Validation(problems))
}
