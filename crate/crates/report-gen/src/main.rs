use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use report_gen::{
    build_dossiers, category_winrates, read_sidecar, serve_stub_model, Categorization, EpisodeDossier, Episode, Frame,
    HttpModelClient, ModelConfig, ReportError, Reporter, StubModel,
};
use serde::Deserialize;

/// Categorize evaluation episodes and write cited policy reports.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Categorize episodes from their first frames and instruction.
    Categorize {
        /// JSON list of {session_id, instruction, frames: [image paths]}.
        #[arg(long)]
        episodes: PathBuf,
        /// Output JSON map from session id to {category, scene}.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write the full and summary report for one policy.
    Report {
        #[command(flatten)]
        data: DataArgs,
        /// Name used in the prompt (default: the policy id).
        #[arg(long)]
        policy_name: Option<String>,
        #[arg(long, default_value = "reports")]
        out_dir: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Per-category win/tie/loss rates for one policy.
    Winrates {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Serve a chat-completion stub that always gives the same reply.
    ServeStub {
        #[arg(long, default_value = "127.0.0.1:8090")]
        bind: std::net::SocketAddr,
        /// File holding the reply text.
        #[arg(long)]
        reply: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// JSON model configuration (endpoint, model names, key variable, ...).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured endpoint.
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Record CSV exported by the arena.
    #[arg(long)]
    export: PathBuf,
    /// Free-text sidecar (JSON lines) exported by the arena.
    #[arg(long)]
    sidecar: PathBuf,
    /// Output of `categorize`.
    #[arg(long)]
    categories: PathBuf,
    #[arg(long)]
    policy_id: String,
    /// Optional JSON map from policy id to display name.
    #[arg(long)]
    names: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct EpisodeSpec {
    session_id: String,
    instruction: String,
    frames: Vec<PathBuf>,
}

fn input(e: impl std::fmt::Display) -> ReportError {
    ReportError::Input(e.to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let file = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn reporter(args: &ModelArgs) -> Result<Reporter, ReportError> {
    let mut config: ModelConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => ModelConfig::default(),
    };
    if let Some(endpoint) = &args.endpoint {
        config.endpoint = endpoint.clone();
    }
    let client = HttpModelClient::from_config(&config)?;
    Ok(Reporter::new(Arc::new(client), config))
}

fn dossiers(data: &DataArgs) -> Result<Vec<EpisodeDossier>, ReportError> {
    let file = File::open(&data.export).map_err(|e| input(format!("{}: {e}", data.export.display())))?;
    let records = ranking_core::io::read_csv(file).map_err(input)?;
    let sidecar_file = File::open(&data.sidecar).map_err(|e| input(format!("{}: {e}", data.sidecar.display())))?;
    let sidecar = read_sidecar(BufReader::new(sidecar_file))?;
    let categories: HashMap<String, Categorization> = read_json(&data.categories)?;
    let names: HashMap<String, String> = match &data.names {
        Some(path) => read_json(path)?,
        None => HashMap::new(),
    };
    build_dossiers(&data.policy_id, &records, &sidecar, &categories, &names)
}

async fn run(cli: Cli) -> Result<(), ReportError> {
    match cli.command {
        Command::Categorize { episodes, out, model } => {
            let specs: Vec<EpisodeSpec> = read_json(&episodes)?;
            let mut list = Vec::with_capacity(specs.len());
            for s in specs {
                let frames = s.frames.iter().map(|p| Frame::load(p)).collect::<Result<Vec<_>, _>>()?;
                list.push(Episode {
                    session_id: s.session_id,
                    instruction: s.instruction,
                    frames,
                });
            }
            let reporter = reporter(&model)?;
            let mut categories = std::collections::BTreeMap::new();
            let mut failures = 0;
            for (episode, result) in list.iter().zip(reporter.categorize_all(&list).await) {
                match result {
                    Ok(c) => {
                        categories.insert(episode.session_id.clone(), c);
                    }
                    Err(e) => {
                        failures += 1;
                        eprintln!("{}: {e}", episode.session_id);
                    }
                }
            }
            let json = serde_json::to_string_pretty(&categories).map_err(input)?;
            std::fs::write(&out, json).map_err(input)?;
            println!("categorized {} of {} episodes", categories.len(), list.len());
            if failures > 0 {
                return Err(input(format!("{failures} episode(s) could not be categorized")));
            }
        }
        Command::Report {
            data,
            policy_name,
            out_dir,
            model,
        } => {
            let dossiers = dossiers(&data)?;
            let reporter = reporter(&model)?;
            let name = policy_name.unwrap_or_else(|| data.policy_id.clone());
            let full = reporter.build_full_report(&data.policy_id, &name, &dossiers).await?;
            let summary = reporter.summarize_report(&full).await?;
            std::fs::create_dir_all(&out_dir).map_err(input)?;
            let stem = out_dir.join(&data.policy_id);
            std::fs::write(stem.with_extension("full.md"), &full.text).map_err(input)?;
            std::fs::write(stem.with_extension("summary.md"), &summary.text).map_err(input)?;
            let rates = serde_json::to_string_pretty(&category_winrates(&dossiers)).map_err(input)?;
            std::fs::write(stem.with_extension("winrates.json"), rates).map_err(input)?;
            println!(
                "{}: {} episodes, {} cited, reports in {}",
                data.policy_id,
                dossiers.len(),
                full.citations.len(),
                out_dir.display()
            );
        }
        Command::Winrates { data } => {
            let dossiers = dossiers(&data)?;
            println!("{:<26} {:>5} {:>5} {:>5} {:>6}", "category", "win", "tie", "loss", "win%");
            for (category, r) in category_winrates(&dossiers) {
                println!(
                    "{:<26} {:>5} {:>5} {:>5} {:>6.1}",
                    category.as_str(),
                    r.wins,
                    r.ties,
                    r.losses,
                    100.0 * r.win_rate()
                );
            }
        }
        Command::ServeStub { bind, reply } => {
            let text = std::fs::read_to_string(&reply).map_err(|e| input(format!("{}: {e}", reply.display())))?;
            let server = serve_stub_model(Arc::new(StubModel::constant(text)), bind).await.map_err(input)?;
            println!("stub model at {}", server.endpoint());
            tokio::signal::ctrl_c().await.map_err(input)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
