use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use cflp::config::RunConfig;
use cflp::dataset::write_native;
use cflp::pipeline::{self, seed_dir};
use cflp::synthetic::PlantedPartition;
use cflp::treatments::TreatmentKey;

#[derive(Parser)]
#[command(name = "cflp", version, about = "Counterfactual link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate over every seed; writes per-seed artifacts and aggregate.json.
    Run(RunArgs),
    /// Run the pipeline once per treatment and rank them.
    CompareTreatments {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated treatment keys (default: all).
        #[arg(long, value_delimiter = ',')]
        treatments: Vec<TreatmentKey>,
    },
    /// Build the counterfactual table without training.
    MatchOnly {
        #[command(flatten)]
        run: RunArgs,
        /// Also write gamma_sweep.csv over these percentiles.
        #[arg(long, value_delimiter = ',')]
        gamma_sweep: Vec<f64>,
    },
    /// Score a stored checkpoint on its stored split.
    EvalOnly {
        #[command(flatten)]
        run: RunArgs,
        /// Directory holding split.bin and checkpoint.bin (default: <out>/seed_<seed>).
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Seed the run was made with.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a planted-partition graph in the native dataset layout.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        nodes: usize,
        #[arg(long, default_value_t = 4)]
        communities: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// key = value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory, edge-list file, or name under $CFLP_DATA_DIR.
    #[arg(long)]
    dataset: Option<String>,
    /// kcore | louvain | propc | specc | commn | katz
    #[arg(long)]
    treatment: Option<String>,
    /// eigenmap[:dim] or file:<path>
    #[arg(long)]
    embed: Option<String>,
    /// Matching radius γ as a percentile of pairwise embedding distances (default 20)
    #[arg(long)]
    gamma_pct: Option<String>,
    /// Weight of the counterfactual loss (default 1)
    #[arg(long)]
    alpha: Option<String>,
    /// Weight of the distribution discrepancy loss (default 1)
    #[arg(long)]
    beta: Option<String>,
    /// Peak learning rate of the cyclical schedule (default 0.01)
    #[arg(long)]
    lr: Option<String>,
    /// Joint training epochs (default 140)
    #[arg(long)]
    epochs: Option<String>,
    /// Decoder fine-tuning epochs (default 70)
    #[arg(long)]
    ft_epochs: Option<String>,
    /// gcn | sage | jknet
    #[arg(long)]
    arch: Option<String>,
    /// Encoder hidden width (default 256)
    #[arg(long)]
    hidden: Option<String>,
    /// Node representation width (defaults to the hidden width)
    #[arg(long)]
    repr_dim: Option<String>,
    /// Seed count `n`, range `a..b`, or list `a,b,c`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory (default runs)
    #[arg(long)]
    out: Option<String>,
    /// operative | literal
    #[arg(long)]
    disc: Option<String>,
    /// Train the factual-only model (no counterfactual terms, no fine-tuning).
    #[arg(long)]
    baseline: bool,
}

impl RunArgs {
    /// Configuration errors carry a `[config]` tag, like pipeline stage errors.
    fn config(&self) -> Result<RunConfig> {
        self.parse_config().map_err(|e| anyhow!("[config] {e:#}"))
    }

    fn parse_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("dataset", &self.dataset),
            ("treatment", &self.treatment),
            ("embed", &self.embed),
            ("gamma_pct", &self.gamma_pct),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("ft_epochs", &self.ft_epochs),
            ("arch", &self.arch),
            ("hidden", &self.hidden),
            ("repr_dim", &self.repr_dim),
            ("seeds", &self.seeds),
            ("out", &self.out),
            ("disc", &self.disc),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        if self.baseline {
            cfg.baseline = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let out = pipeline::run_pipeline(&cfg)?;
            info!("wrote {}", cfg.out.join("aggregate.json").display());
            print_json(&out.aggregate)?;
        }
        Command::CompareTreatments { run, treatments } => {
            let cfg = run.config()?;
            let keys = if treatments.is_empty() { TreatmentKey::ALL.to_vec() } else { treatments };
            let cmp = pipeline::compare_treatments(&cfg, &keys)?;
            println!("{:<10} {:>9} {:>9} {:>9}", "treatment", "hits@20", "ate_obs", "ate_est");
            for r in &cmp.rows {
                let hits = r.hits20.map_or("-".to_string(), |h| format!("{h:.4}"));
                println!("{:<10} {hits:>9} {:>9.4} {:>9.4}", r.treatment, r.ate_obs, r.ate_est);
            }
            match cmp.kendall_tau {
                Some(t) => println!("kendall tau (ate_obs vs ate_est): {t:.4}"),
                None => println!("kendall tau (ate_obs vs ate_est): undefined"),
            }
        }
        Command::MatchOnly { run, gamma_sweep } => {
            let cfg = run.config()?;
            let mut log = pipeline::StageLog::default();
            let graph = pipeline::load_graph(&cfg, &mut log)?;
            let summary = pipeline::match_only_on(&graph, &cfg, &mut log)?;
            if !gamma_sweep.is_empty() {
                let csv = pipeline::gamma_sweep(&graph, &cfg, &gamma_sweep)?;
                let path = cfg.out.join("gamma_sweep.csv");
                fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
                info!("wrote {}", path.display());
            }
            print_json(&summary)?;
        }
        Command::EvalOnly { run, run_dir, seed } => {
            let cfg = run.config()?;
            let dir = run_dir.unwrap_or_else(|| seed_dir(&cfg.out, seed));
            if !dir.join("checkpoint.bin").is_file() {
                bail!("[load] no checkpoint.bin in {}", dir.display());
            }
            print_json(&pipeline::eval_only(&cfg, &dir, seed)?)?;
        }
        Command::Generate { out, nodes, communities, seed } => {
            let graph = PlantedPartition { nodes, communities, seed, ..Default::default() }.generate()?;
            write_native(&graph, &out)?;
            info!("wrote {} nodes and {} edges to {}", graph.num_nodes(), graph.num_edges(), out.display());
        }
    }
    Ok(())
}
