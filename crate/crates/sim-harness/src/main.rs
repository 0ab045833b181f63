use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use policy_gateway::{serve_synthetic, SyntheticPolicySpec};
use ranking_core::RankingMethod;
use sim_harness::{
    oracle_scores, run_drift_experiment, run_ranking_experiment, sample_world_with, ExperimentConfig, ExperimentReport,
    WorldConfig,
};

#[derive(Parser)]
#[command(name = "sim-harness", about = "Synthetic worlds and ranking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a world and print its parameters and oracle scores as JSON.
    World {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ranking quality versus number of comparisons.
    RankExp(ExpArgs),
    /// Ranking quality under task drift and policy churn.
    DriftExp(ExpArgs),
    /// Serve synthetic policies on consecutive ports until interrupted.
    ServeEnv {
        /// Comma-separated skills in [0, 1], one server each.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
        skills: Vec<f64>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// First port; 0 picks free ports.
        #[arg(long, default_value_t = 0)]
        base_port: u16,
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
    },
}

#[derive(Args)]
struct WorldArgs {
    #[arg(long, default_value_t = 7)]
    policies: usize,
    #[arg(long, default_value_t = 5)]
    buckets: usize,
    #[arg(long, default_value_t = 0.3)]
    psi_std: f64,
    #[arg(long, default_value_t = 0.1)]
    progress_noise: f64,
}

impl WorldArgs {
    fn config(&self) -> WorldConfig {
        WorldConfig::new(self.policies, self.buckets)
            .with_psi_std(self.psi_std)
            .with_progress_noise(self.progress_noise)
    }
}

#[derive(Args)]
struct ExpArgs {
    /// JSON experiment configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<RankingMethod>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Latent buckets used by the TASK fit.
    #[arg(long)]
    em_buckets: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for rows.csv, summary.csv and long.csv.
    #[arg(long, default_value = "sim-out")]
    out: PathBuf,
}

impl ExpArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig {
                world: self.world.config(),
                ..ExperimentConfig::default()
            },
        };
        if let Some(grid) = &self.grid {
            config.grid = grid.clone();
        }
        if let Some(methods) = &self.methods {
            config.methods = methods.clone();
        }
        if let Some(reps) = self.reps {
            config.repetitions = reps;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
            config.ranking.em.seed = seed;
        }
        if let Some(t) = self.em_buckets {
            config.ranking.em.num_buckets = t;
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        Ok(config)
    }
}

fn write_report(report: &ExperimentReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let open = |name: &str| -> Result<BufWriter<File>> {
        let path = out.join(name);
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    };
    report.write_rows_csv(open("rows.csv")?)?;
    report.write_summary_csv(open("summary.csv")?)?;
    report.write_long_csv(open("long.csv")?)?;
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    println!("{:<10} {:>6} {:>4} {:>9} {:>8} {:>8} {:>8}", "method", "M", "n", "pearson", "sd", "mmrv", "sd");
    for s in &report.summary {
        println!(
            "{:<10} {:>6} {:>4} {:>9.4} {:>8.4} {:>8.4} {:>8.4}",
            s.method, s.comparisons, s.n, s.mean_pearson, s.std_pearson, s.mean_mmrv, s.std_mmrv
        );
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::World { world, seed } => {
            let spec = sample_world_with(&world.config(), seed);
            let oracle = oracle_scores(&spec);
            let out = serde_json::json!({ "world": spec, "oracle": oracle });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::RankExp(args) => {
            let config = args.resolve()?;
            let report = run_ranking_experiment(&config).map_err(anyhow::Error::msg)?;
            write_report(&report, &args.out)?;
            print_summary(&report);
        }
        Command::DriftExp(args) => {
            let config = args.resolve()?;
            let report = run_drift_experiment(&config).map_err(anyhow::Error::msg)?;
            write_report(&report, &args.out)?;
            print_summary(&report);
        }
        Command::ServeEnv {
            skills,
            host,
            base_port,
            latency_ms,
        } => {
            if skills.iter().any(|s| !(0.0..=1.0).contains(s)) {
                bail!("skills must lie in [0, 1]");
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let mut servers = Vec::new();
                for (k, &skill) in skills.iter().enumerate() {
                    let port = if base_port == 0 { 0 } else { base_port + k as u16 };
                    let addr: SocketAddr = format!("{host}:{port}").parse().context("bad host")?;
                    let spec = SyntheticPolicySpec::new(format!("synthetic-{k}"), skill)
                        .with_seed(k as u64)
                        .with_latency(latency_ms);
                    let server = serve_synthetic(spec, addr).await?;
                    println!("synthetic-{k} skill={skill} {}", server.endpoint());
                    servers.push(server);
                }
                tokio::signal::ctrl_c().await?;
                for s in servers {
                    s.stop().await;
                }
                Ok::<_, anyhow::Error>(())
            })?;
        }
    }
    Ok(())
}
