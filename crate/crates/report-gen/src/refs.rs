//! Citation checking for `<ref>…</ref>` tags.
//!
//! Grammar: a citation opens with `<ref>` and closes at the next `</ref>`.
//! Its content must be a full hyphenated UUID (8-4-4-4-12 hex digits) that
//! appears verbatim in the known set. An opening tag followed by another
//! opening tag (or the end of text) before any closing tag is unterminated; a
//! closing tag with no open citation is stray.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub const OPEN: &str = "<ref>";
pub const CLOSE: &str = "</ref>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Content is not a full UUID, e.g. truncated or altered.
    MalformedId,
    /// Well-formed UUID that is not one of the provided sessions.
    InventedId,
    Unterminated,
    StrayClose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefViolation {
    pub kind: ViolationKind,
    /// Byte offset of the offending tag.
    pub position: usize,
    pub content: String,
}

impl fmt::Display for RefViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::MalformedId => "malformed id",
            ViolationKind::InventedId => "invented id",
            ViolationKind::Unterminated => "unterminated <ref>",
            ViolationKind::StrayClose => "stray </ref>",
        };
        write!(f, "{what} {:?} at byte {}", self.content, self.position)
    }
}

/// Full lowercase-or-uppercase hyphenated UUID, nothing else.
pub fn is_full_uuid(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 36
        && b.iter().enumerate().all(|(k, &c)| match k {
            8 | 13 | 18 | 23 => c == b'-',
            _ => c.is_ascii_hexdigit(),
        })
}

/// Every `<ref>` content in order of appearance, including invalid ones.
pub fn extract_refs(text: &str) -> Vec<(usize, &str)> {
    scan(text).0
}

/// Reports every citation that breaks the grammar or cites an unknown id.
pub fn validate_refs(text: &str, known: &HashSet<String>) -> Vec<RefViolation> {
    let (refs, mut violations) = scan(text);
    for (position, content) in refs {
        let kind = if !is_full_uuid(content) {
            ViolationKind::MalformedId
        } else if !known.contains(content) {
            ViolationKind::InventedId
        } else {
            continue;
        };
        violations.push(RefViolation {
            kind,
            position,
            content: content.to_string(),
        });
    }
    violations.sort_by_key(|v| v.position);
    violations
}

fn scan(text: &str) -> (Vec<(usize, &str)>, Vec<RefViolation>) {
    let mut refs = Vec::new();
    let mut violations = Vec::new();
    let mut at = 0;
    loop {
        let open = text[at..].find(OPEN).map(|k| at + k);
        let close = text[at..].find(CLOSE).map(|k| at + k);
        match (open, close) {
            (None, None) => break,
            (Some(o), c) if c.is_none_or(|c| o < c) => {
                let body = o + OPEN.len();
                let next_open = text[body..].find(OPEN).map(|k| body + k);
                let next_close = text[body..].find(CLOSE).map(|k| body + k);
                match next_close {
                    Some(c) if next_open.is_none_or(|n| c < n) => {
                        refs.push((o, &text[body..c]));
                        at = c + CLOSE.len();
                    }
                    _ => {
                        violations.push(RefViolation {
                            kind: ViolationKind::Unterminated,
                            position: o,
                            content: String::new(),
                        });
                        at = body;
                    }
                }
            }
            (_, Some(c)) => {
                violations.push(RefViolation {
                    kind: ViolationKind::StrayClose,
                    position: c,
                    content: String::new(),
                });
                at = c + CLOSE.len();
            }
            (Some(_), None) => unreachable!("handled by the guard above"),
        }
    }
    (refs, violations)
}
