use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use arena_server::{router, spawn_expiry_task, Arena, ArenaConfig, SqliteStore, SystemClock};
use clap::Parser;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "arena-server", about = "Double-blind pairwise policy evaluation server")]
struct Cli {
    /// SQLite database file; created if missing.
    #[arg(long, default_value = "arena.db")]
    db: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, default_value_t = 1800)]
    session_timeout_s: u64,
    #[arg(long, default_value_t = 3)]
    max_open_sessions: usize,
    #[arg(long, default_value_t = 0)]
    sponsored_base: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    policy_timeout_ms: u64,
    /// Seconds between expiry sweeps.
    #[arg(long, default_value_t = 10)]
    expiry_interval_s: u64,
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = ArenaConfig {
        session_timeout_secs: cli.session_timeout_s,
        max_open_sessions: cli.max_open_sessions,
        default_sponsored_base: cli.sponsored_base,
        seed: cli.seed,
        policy_timeout_ms: cli.policy_timeout_ms,
        ..ArenaConfig::default()
    };
    let store = SqliteStore::open(&cli.db).with_context(|| format!("opening {}", cli.db.display()))?;
    let arena = Arc::new(Arena::with_policy_client(Box::new(store), Arc::new(SystemClock), config)?);
    let sweeper = spawn_expiry_task(arena.clone(), Duration::from_secs(cli.expiry_interval_s.max(1)));

    let listener = tokio::net::TcpListener::bind(cli.bind)
        .await
        .with_context(|| format!("binding {}", cli.bind))?;
    let addr = listener.local_addr()?;
    // Scripts and tests read this line to find the port.
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;

    axum::serve(listener, router(arena))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    sweeper.abort();
    Ok(())
}
