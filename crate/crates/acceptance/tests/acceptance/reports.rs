//! P10: prompt rendering, citation checking and the category set.

use std::collections::HashSet;

use acceptance::{ensure, CheckResult};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use ranking_core::Outcome;
use report_gen::prompt::{render_categorize, render_full_report, render_summary};
use report_gen::{is_full_uuid, validate_refs, EpisodeDossier, HeadToHead, RefViolation, Side, TaskCategory, ViolationKind};

const GOLDEN_CATEGORIZE: &str = include_str!("../../../report-gen/tests/golden/categorize.txt");
const GOLDEN_FULL: &str = include_str!("../../../report-gen/tests/golden/full_report_2.txt");
const GOLDEN_SUMMARY: &str = include_str!("../../../report-gen/tests/golden/summary.txt");

const CATEGORY_NAMES: [&str; 11] = [
    "Pick and Place",
    "Open / Close",
    "Move / Slide",
    "Knock Over / Topple",
    "Cover / Drape / Fold",
    "Group / Organize / Stack",
    "Find / Search",
    "Minimal or No Action",
    "Object Manipulation",
    "Sorting / Classification",
    "Tool Use",
];

/// The episodes behind the golden full-report render.
fn golden_dossiers() -> Vec<EpisodeDossier> {
    vec![
        EpisodeDossier {
            session_id: "3f2a1c9e-8b7d-4e6f-9a0b-1c2d3e4f5a6b".into(),
            instruction: "put the marker in the cup".into(),
            category: TaskCategory::PickAndPlace,
            scene: "Bright overhead light; three objects on a white table.".into(),
            result: HeadToHead {
                opponent: "Policy Beta".into(),
                side: Side::A,
                outcome: Outcome::Win,
                own_progress: Some(0.8),
                opponent_progress: Some(0.3),
                explanation: "A dropped the marker into the cup; B never grasped it.".into(),
            },
        },
        EpisodeDossier {
            session_id: "9c8b7a6d-5e4f-4a3b-8c2d-1e0f9a8b7c6d".into(),
            instruction: "open the top drawer".into(),
            category: TaskCategory::OpenClose,
            scene: "Dim lighting; the drawer handle is partly occluded.".into(),
            result: HeadToHead {
                opponent: "Policy Gamma".into(),
                side: Side::B,
                outcome: Outcome::Loss,
                own_progress: Some(0.2),
                opponent_progress: Some(0.6),
                explanation: "A pulled the drawer halfway; B only touched the handle.".into(),
            },
        },
    ]
}

fn goldens() -> Result<(), String> {
    let renders = [
        ("categorize", render_categorize("put the marker in the cup"), GOLDEN_CATEGORIZE),
        ("full report", render_full_report("Policy Alpha", &golden_dossiers()), GOLDEN_FULL),
        ("summary", render_summary("1. **Policy Overview**\nSolid.\n"), GOLDEN_SUMMARY),
    ];
    for (name, actual, expected) in renders {
        ensure(actual == expected, || {
            let at = actual.bytes().zip(expected.bytes()).take_while(|(a, b)| a == b).count();
            format!("{name} render differs from golden at byte {at}")
        })?;
    }
    Ok(())
}

const PROVIDED: [&str; 3] = [
    "0d3c9a7e-2f41-4b8a-9c6d-5e7f1a2b3c4d",
    "a1b2c3d4-e5f6-4a7b-8c9d-0e1f2a3b4c5d",
    "ffee0011-2233-4455-6677-8899aabbccdd",
];

#[derive(Debug, Clone)]
enum Piece {
    Prose(String),
    Cite(usize),
    Foreign(String),
    Garbled(String),
    Stray,
}

fn piece() -> impl Strategy<Value = Piece> {
    let foreign = any::<[u8; 16]>()
        .prop_map(|b| {
            let h: String = b.iter().map(|x| format!("{x:02x}")).collect();
            format!("{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..])
        })
        .prop_filter("provided ids are not foreign", |s| !PROVIDED.contains(&s.as_str()));
    let garbled = prop_oneof![
        "[0-9a-f -]{0,40}",
        (0..3usize, 1..36usize).prop_map(|(k, n)| PROVIDED[k][..n].to_string()),
        (0..3usize).prop_map(|k| PROVIDED[k].replace('-', "")),
    ]
    .prop_filter("must not be a full id", |s| !is_full_uuid(s));
    prop_oneof![
        5 => "[a-zA-Z0-9 .,;:()\n/]{0,30}".prop_map(Piece::Prose),
        4 => (0..3usize).prop_map(Piece::Cite),
        2 => foreign.prop_map(Piece::Foreign),
        2 => garbled.prop_map(Piece::Garbled),
        1 => Just(Piece::Stray),
    ]
}

/// Builds a report and the violations it must produce. An unterminated tag,
/// if any, is placed last so no later close can pair with it.
fn build(pieces: &[Piece], dangling: bool) -> (String, Vec<RefViolation>) {
    let mut text = String::new();
    let mut want = Vec::new();
    for p in pieces {
        let position = text.len();
        let (kind, content) = match p {
            Piece::Prose(s) => {
                text.push_str(s);
                continue;
            }
            Piece::Cite(k) => {
                text.push_str(&format!("<ref>{}</ref>", PROVIDED[*k]));
                continue;
            }
            Piece::Foreign(id) => (ViolationKind::InventedId, id.clone()),
            Piece::Garbled(s) => (ViolationKind::MalformedId, s.clone()),
            Piece::Stray => {
                text.push_str("</ref>");
                want.push(RefViolation {
                    kind: ViolationKind::StrayClose,
                    position,
                    content: String::new(),
                });
                continue;
            }
        };
        text.push_str(&format!("<ref>{content}</ref>"));
        want.push(RefViolation { kind, position, content });
    }
    if dangling {
        want.push(RefViolation {
            kind: ViolationKind::Unterminated,
            position: text.len(),
            content: String::new(),
        });
        text.push_str("<ref>");
    }
    (text, want)
}

fn refs_suite() -> Result<usize, String> {
    let provided: HashSet<String> = PROVIDED.iter().map(|s| s.to_string()).collect();
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (prop::collection::vec(piece(), 0..20), any::<bool>());
    runner
        .run(&strategy, |(pieces, dangling)| {
            let (text, want) = build(&pieces, dangling);
            let got = validate_refs(&text, &provided);
            if got != want {
                return Err(TestCaseError::fail(format!("{text:?}: got {got:?}, want {want:?}")));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(200)
}

fn categories() -> Result<(), String> {
    let names: Vec<&str> = TaskCategory::ALL.iter().map(|c| c.as_str()).collect();
    ensure(names == CATEGORY_NAMES, || format!("category set {names:?}"))?;
    for name in CATEGORY_NAMES {
        let parsed: TaskCategory = name.parse()?;
        ensure(parsed.as_str() == name, || format!("{name} does not round-trip"))?;
    }
    for near_miss in ["pick and place", "Open/Close", "Tool use", "Pick and Place.", "Other"] {
        ensure(near_miss.parse::<TaskCategory>().is_err(), || format!("{near_miss:?} accepted"))?;
    }
    let listed = CATEGORY_NAMES.join(", ");
    ensure(render_full_report("P", &golden_dossiers()).contains(&listed), || {
        "full-report prompt does not list the category set".into()
    })
}

pub fn p10_reports() -> CheckResult {
    goldens()?;
    let cases = refs_suite()?;
    categories()?;
    Ok(format!("3 renders byte-identical to golden; {cases} generated citation cases; 11 categories exact"))
}
