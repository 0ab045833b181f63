use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use eval_client::{run_session, ClientError, InputMode, LinePrompter, SessionScript};
use sim_harness::sample_world;

/// Run blind A/B evaluation sessions against an arena server.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Arena server base URL.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    server: String,
    #[arg(long)]
    evaluator_id: String,
    /// Policy calls per rollout.
    #[arg(long, default_value_t = 20)]
    max_steps: usize,
    /// Per-call deadline in seconds.
    #[arg(long, default_value_t = 10.0)]
    timeout_s: f64,
    /// Read answers from this JSON file instead of prompting.
    #[arg(long, conflicts_with = "simulate")]
    script: Option<PathBuf>,
    /// Spend a credit to evaluate one of your own policies.
    #[arg(long)]
    own_policy: Option<String>,
    /// Let the simulated environment answer (for unattended runs).
    #[arg(long)]
    simulate: bool,
    /// Instruction used in simulated mode (default: drawn per session).
    #[arg(long, requires = "simulate")]
    instruction: Option<String>,
    /// Number of consecutive sessions.
    #[arg(long, default_value_t = 1)]
    sessions: usize,
    #[arg(long, default_value = "traces")]
    trace_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Task buckets of the simulated world.
    #[arg(long, default_value_t = 5)]
    world_buckets: usize,
}

async fn run(cli: Cli) -> Result<(), ClientError> {
    if !(cli.timeout_s.is_finite() && cli.timeout_s > 0.0) {
        return Err(ClientError::Validation(vec!["--timeout-s must be positive".into()]));
    }
    if cli.world_buckets == 0 {
        return Err(ClientError::Validation(vec!["--world-buckets must be at least 1".into()]));
    }
    let world = sample_world(2, cli.world_buckets, cli.seed);
    let stdout = io::stdout();
    for k in 0..cli.sessions.max(1) {
        let input = match (&cli.script, cli.simulate) {
            (Some(path), _) => InputMode::Scripted(path.clone()),
            (None, true) => InputMode::Simulated {
                instruction: cli.instruction.clone(),
            },
            (None, false) => InputMode::Interactive(Box::new(LinePrompter::new(io::stdin().lock(), io::stdout()))),
        };
        let mut script = SessionScript {
            server: cli.server.clone(),
            evaluator_id: cli.evaluator_id.clone(),
            max_steps: cli.max_steps,
            timeout: Duration::from_secs_f64(cli.timeout_s),
            input,
            own_policy: cli.own_policy.clone(),
            trace_dir: cli.trace_dir.clone(),
            seed: cli.seed.wrapping_add(k as u64),
        };
        let outcome = run_session(&mut script, &world, &mut stdout.lock()).await?;
        println!("balance: {}", outcome.ack.balance);
        io::stdout().flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Builder::new_current_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
