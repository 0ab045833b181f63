//! Prompt templates and their renderers. Templates live in `templates/` and
//! contain `{{slot}}` markers; everything else is sent verbatim.

use crate::dossier::EpisodeDossier;

pub const FULL_REPORT_TEMPLATE: &str = include_str!("../templates/full_report.txt");
pub const SUMMARY_TEMPLATE: &str = include_str!("../templates/summary.txt");
pub const CATEGORIZE_TEMPLATE: &str = include_str!("../templates/categorize.txt");

/// The nine report sections, in order.
pub const SECTIONS: [&str; 9] = [
    "Policy Overview",
    "Comparative Performance",
    "Strengths",
    "Weaknesses",
    "Instruction Following",
    "Reasoning",
    "Manipulation Skills",
    "Robustness to Scene Variations",
    "Common Failure Modes",
];

/// Substitutes slots in one pass over the template, so slot-like text inside
/// a value is left alone.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start..].find("}}") else { break };
        let name = &rest[start + 2..start + len];
        out.push_str(&rest[..start]);
        match values.iter().find(|(slot, _)| *slot == name) {
            Some((_, value)) => out.push_str(value),
            None => out.push_str(&rest[start..start + len + 2]),
        }
        rest = &rest[start + len + 2..];
    }
    out.push_str(rest);
    out
}

pub fn render_categorize(instruction: &str) -> String {
    fill(CATEGORIZE_TEMPLATE, &[("instruction", instruction)])
}

pub fn render_episode(number: usize, dossier: &EpisodeDossier) -> String {
    format!(
        "========== Episode Report #{number} ==========\n\
         Session ID: {}\n\
         Task: {}\n\
         Task category: {}\n\
         Scene and task analysis: {}\n\
         Head-to-head result: {}",
        dossier.session_id,
        dossier.instruction,
        dossier.category,
        dossier.scene,
        dossier.result.summary()
    )
}

pub fn render_full_report(policy_name: &str, dossiers: &[EpisodeDossier]) -> String {
    let episodes: Vec<String> = dossiers.iter().enumerate().map(|(k, d)| render_episode(k + 1, d)).collect();
    fill(
        FULL_REPORT_TEMPLATE,
        &[("policy_name", policy_name), ("episode_reports", &episodes.join("\n\n"))],
    )
}

pub fn render_summary(full_report: &str) -> String {
    fill(SUMMARY_TEMPLATE, &[("full_report", full_report)])
}
