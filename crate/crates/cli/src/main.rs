mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Precision, RunConfig, CONFIG_FILE, DEFAULT_OUT};

#[derive(Parser, Debug)]
#[command(name = "hsgcn", version, about = "Hamming-space graph hashing recommender")]
struct Cli {
    /// Worker threads; 1 gives fully sequential execution.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (falls back to the config file, then `hsgcn-out`).
    #[arg(long, global = true, env = "HSGCN_OUT")]
    out: Option<PathBuf>,

    /// TOML run configuration. Defaults to `<out>/config.toml` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, filter and split an interaction log.
    Prepare(PrepareArgs),
    /// Train on a prepared split.
    Train(TrainArgs),
    /// Write packed codes from the training checkpoint.
    Export(ExportArgs),
    /// Test-set HR@K and NDCG@K of exported codes.
    Eval(EvalArgs),
    /// Top-k items for one user.
    Recommend(RecommendArgs),
    /// Packed versus dense retrieval timing.
    Bench(BenchArgs),
    /// Finite-difference check of the gradients on a small random instance.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Interaction log (`user,item[,rating][,timestamp]`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub k_core: Option<usize>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long)]
    pub valid_frac: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Split each user's interactions separately.
    #[arg(long)]
    pub per_user: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub beta_initial: Option<f64>,
    /// Multiplier applied to beta every `--beta-every` epochs.
    #[arg(long)]
    pub beta_factor: Option<f64>,
    #[arg(long)]
    pub beta_every: Option<usize>,
    #[arg(long)]
    pub beta_max: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub no_initial_rank: bool,
    #[arg(long)]
    pub no_final_rank: bool,
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Node dropout ratio; enables dropout when positive.
    #[arg(long)]
    pub node_dropout: Option<f64>,
    /// Bit dropout ratio; enables dropout when positive.
    #[arg(long)]
    pub bit_dropout: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub valid_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Continue from `<out>/checkpoint.hsck`.
    #[arg(long)]
    pub resume: bool,
    /// Run the gradient check first and abort if it fails.
    #[arg(long)]
    pub gradcheck: bool,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Directory holding the split manifest.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Count a user as hit when any relevant item is in the top k.
    #[arg(long)]
    pub any_hit: bool,
    #[arg(long)]
    pub no_groups: bool,
}

#[derive(Args, Debug)]
pub struct RecommendArgs {
    /// External user id.
    #[arg(long)]
    pub user: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, conflicts_with = "synthetic_items")]
    pub codes: Option<PathBuf>,
    /// Benchmark random codes for this many items instead of a code file.
    #[arg(long)]
    pub synthetic_items: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub users: usize,
    #[arg(long, default_value_t = 8)]
    pub items: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub struct Context {
    pub out: PathBuf,
    pub config: RunConfig,
}

fn context(cli: &Cli) -> Result<Context> {
    let explicit = cli.config.clone();
    let config = match &explicit {
        Some(p) => RunConfig::load(p)?,
        None => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let p = out.join(CONFIG_FILE);
            if p.exists() {
                RunConfig::load(&p)?
            } else {
                RunConfig::default()
            }
        }
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Context { out, config })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let mut ctx = context(&cli)?;
    match cli.command {
        Command::Prepare(a) => commands::prepare(&mut ctx, &a),
        Command::Train(a) => commands::train(&mut ctx, &a),
        Command::Export(a) => commands::export(&ctx, &a),
        Command::Eval(a) => commands::eval(&mut ctx, &a),
        Command::Recommend(a) => commands::recommend(&ctx, &a),
        Command::Bench(a) => commands::bench(&ctx, &a),
        Command::Gradcheck(a) => commands::gradcheck(&ctx, &a),
    }
}
