use std::io::Write;
use std::path::PathBuf;

use arena_server::{FeedbackAck, FeedbackSubmission, Preference, SessionView};
use policy_gateway::protocol::fnv1a;
use policy_gateway::PolicyClient;
use sim_harness::{SyntheticEnv, WorldSpec};

use crate::api::ArenaClient;
use crate::error::ClientError;
use crate::rollout::{rollout, Abort, Trace};
use crate::script::{
    ask_until, parse_explanation, parse_preference, parse_progress, InputMode, Judgement, ScriptedAnswers,
    SessionScript,
};

/// Household tasks drawn from when the simulated evaluator picks its own.
pub const TASKS: &[&str] = &[
    "put the marker in the cup",
    "fold the towel in half",
    "open the top drawer",
    "stack the red block on the blue block",
    "wipe the table with the sponge",
    "move the bowl to the left side",
    "close the laptop lid",
    "pick up the spoon and place it in the sink",
];

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub session: SessionView,
    pub feedback: FeedbackSubmission,
    pub ack: FeedbackAck,
    pub traces: [Trace; 2],
}

/// Scene seed for a session: both rollouts of the pair share it.
pub fn scene_seed(seed: u64, session_id: &str) -> u64 {
    fnv1a(&[&seed.to_le_bytes(), session_id.as_bytes()])
}

fn pick_task(seed: u64, session_id: &str) -> String {
    let k = fnv1a(&[b"task", &seed.to_le_bytes(), session_id.as_bytes()]) as usize % TASKS.len();
    TASKS[k].to_string()
}

fn percent(progress: f64) -> i64 {
    (100.0 * progress).round().clamp(0.0, 100.0) as i64
}

/// Runs one full evaluation: request a blind pair, roll out A then B on the
/// same scene, gather the judgement, submit it. Progress lines go to `log`.
pub async fn run_session(
    script: &mut SessionScript,
    world: &WorldSpec,
    log: &mut dyn Write,
) -> Result<SessionOutcome, ClientError> {
    run_session_with_hook(script, world, log, &mut |_| {}).await
}

/// [`run_session`] with a callback between the two rollouts.
pub async fn run_session_with_hook(
    script: &mut SessionScript,
    world: &WorldSpec,
    log: &mut dyn Write,
    between_rollouts: &mut dyn FnMut(&SessionView),
) -> Result<SessionOutcome, ClientError> {
    // Everything checkable offline is checked before the first request.
    script.validate()?;
    let scripted = match &script.input {
        InputMode::Scripted(path) => {
            let answers = ScriptedAnswers::load(path)?;
            let judgement = answers.validate()?;
            Some((answers.instruction.trim().to_string(), judgement))
        }
        _ => None,
    };
    std::fs::create_dir_all(&script.trace_dir)?;

    let arena = ArenaClient::new(&script.server, script.timeout);
    let session = arena.request_session(&script.evaluator_id, script.own_policy.as_deref()).await?;
    let id = session.session_id.clone();
    writeln!(log, "session {id}: deadline {}", session.deadline.to_rfc3339())?;

    let instruction = match (&mut script.input, &scripted) {
        (_, Some((instruction, _))) => instruction.clone(),
        (InputMode::Interactive(prompter), _) => ask_until(prompter.as_mut(), "Instruction for both policies:", |s| {
            parse_explanation(s).map_err(|_| "instruction must be non-empty".to_string())
        })?,
        (InputMode::Simulated { instruction }, _) => instruction.clone().unwrap_or_else(|| pick_task(script.seed, &id)),
        (InputMode::Scripted(_), None) => unreachable!("scripted answers were loaded above"),
    };
    writeln!(log, "session {id}: instruction {instruction:?}")?;

    let policy = PolicyClient::new(script.timeout);
    let seed = scene_seed(script.seed, &id);
    let mut envs = [SyntheticEnv::new(world, &instruction, seed), SyntheticEnv::new(world, &instruction, seed)];
    let mut traces = Vec::with_capacity(2);
    for (k, (label, path)) in [("A", &session.endpoint_a), ("B", &session.endpoint_b)].into_iter().enumerate() {
        if k == 1 {
            between_rollouts(&session);
        }
        let trace = rollout(&policy, &arena.url(path), &mut envs[k], script.max_steps).await;
        writeln!(
            log,
            "session {id}: rollout {label} via {path}: {} steps{}",
            trace.step_count,
            trace.aborted.as_ref().map(|a| format!(", aborted ({a:?})")).unwrap_or_default()
        )?;
        match &trace.aborted {
            Some(Abort::SessionClosed) => {
                writeln!(log, "session {id}: closed by the server during rollout {label}")?;
                return Err(ClientError::Expired(format!("session {id} closed during rollout {label}")));
            }
            Some(Abort::Transport(m)) => return Err(ClientError::Transport(m.clone())),
            _ => {}
        }
        traces.push(trace);
    }

    let measured = [percent(envs[0].progress()), percent(envs[1].progress())];
    let judgement = match (&mut script.input, scripted) {
        (_, Some((_, judgement))) => judgement,
        (InputMode::Interactive(prompter), _) => {
            let p = prompter.as_mut();
            Judgement {
                progress_a: Some(ask_until(p, "Progress of A (0-100):", parse_progress)?),
                progress_b: Some(ask_until(p, "Progress of B (0-100):", parse_progress)?),
                preference: ask_until(p, "Preferred policy (A/B/T):", parse_preference)?,
                explanation: ask_until(p, "Explain your preference:", parse_explanation)?,
            }
        }
        _ => {
            let preference = match measured[0].cmp(&measured[1]) {
                std::cmp::Ordering::Greater => Preference::A,
                std::cmp::Ordering::Less => Preference::B,
                std::cmp::Ordering::Equal => Preference::Tie,
            };
            Judgement {
                progress_a: None,
                progress_b: None,
                preference,
                explanation: format!("A reached {}% and B reached {}% of the task.", measured[0], measured[1]),
            }
        }
    };

    let mut media_refs = Vec::with_capacity(2);
    for (trace, label) in traces.iter().zip(["A", "B"]) {
        let path: PathBuf = script.trace_dir.join(format!("{id}-{label}.json"));
        std::fs::write(&path, serde_json::to_vec(trace).map_err(|e| ClientError::Io(e.to_string()))?)?;
        media_refs.push(path.display().to_string());
    }
    let feedback = FeedbackSubmission {
        instruction,
        progress_a: judgement.progress_a.unwrap_or(measured[0]),
        progress_b: judgement.progress_b.unwrap_or(measured[1]),
        preference: judgement.preference,
        explanation: judgement.explanation,
        media_refs,
    };
    let ack = arena.submit_feedback(&id, &feedback).await?;
    writeln!(log, "session {id}: submitted; earned {} credit(s), balance {}", ack.earned, ack.balance)?;

    let traces: [Trace; 2] = traces.try_into().expect("two rollouts");
    Ok(SessionOutcome {
        session,
        feedback,
        ack,
        traces,
    })
}
