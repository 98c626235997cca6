use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ledgercluster::trainer::{lr_heuristic, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "ledgercluster", version, about = "Deep time-series clustering experiments")]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "snake_case")]
pub enum Command {
    /// Turn a transaction CSV into a dataset of monthly net-flow series.
    Ingest(IngestArgs),
    /// Generate the synthetic polynomial dataset.
    Synth(SynthArgs),
    /// Train one component combination and cluster its held-out split.
    Train(TrainArgs),
    /// Train every compatible combination over a k list and several trials.
    Grid(GridArgs),
    /// Invalid-clustering rate against the clustering/pretraining learning-rate ratio.
    Stability(StabilityArgs),
    /// Render SVG charts from a grid report.
    Report(ReportArgs),
    /// Rerun a command exactly as recorded in its manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Grid(_) => "grid",
            Command::Stability(_) => "stability",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }

    /// Points every output of the command at `out` instead.
    pub fn redirect(&mut self, out: PathBuf) {
        match self {
            Command::Ingest(a) => a.out = out,
            Command::Synth(a) => a.out = out,
            Command::Train(a) => a.out = out,
            Command::Grid(a) => a.out = out,
            Command::Stability(a) => a.out = out,
            Command::Report(a) => a.out = out,
            Command::Replay(a) => a.out = Some(out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Euclidean,
    Cid,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 1000)]
    pub pre_iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub cls_iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub eta_pre: f64,
    /// Defaults to a tenth of --eta-pre.
    #[arg(long)]
    pub eta_cls: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 100)]
    pub target_refresh: usize,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

impl TrainOpts {
    pub fn config(&self, k: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            eta_pre: self.eta_pre,
            eta_cls: self.eta_cls.unwrap_or_else(|| lr_heuristic(self.eta_pre)),
            pre_iters: self.pre_iters,
            cls_iters: self.cls_iters,
            batch_size: self.batch_size,
            k,
            target_refresh: self.target_refresh,
            seed,
            latent_dim: self.latent_dim,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub months: usize,
    /// Months of history an account needs; defaults to --months.
    #[arg(long)]
    pub min_history: Option<usize>,
    /// Keep raw amounts instead of z-normalising each series.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub degrees: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub per_degree: usize,
    #[arg(long, default_value_t = 100)]
    pub length: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, env = "LEDGERCLUSTER_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Combination as arch/dimred/pretext/closs, e.g. cnn/none/lr/de.
    #[arg(long, conflicts_with = "fthc", required_unless_present = "fthc")]
    pub combo: Option<String>,
    /// Shorthand for cnn/none/lr/de.
    #[arg(long)]
    pub fthc: bool,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, env = "LEDGERCLUSTER_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Fraction of series used for training; the rest is clustered and scored.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// Base seed; trial t uses base + t.
    #[arg(long, env = "LEDGERCLUSTER_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    /// 50 pretraining and 50 clustering iterations.
    #[arg(long)]
    pub smoke: bool,
    /// Restrict the grid to these combinations (repeatable).
    #[arg(long = "combo")]
    pub combos: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StabilityArgs {
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.1")]
    pub ratios: Vec<f64>,
    /// Number of seeds, starting at the base seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long, env = "LEDGERCLUSTER_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Dataset to use; defaults to the synthetic polynomial set.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Autoencoder checkpoint whose latent space is plotted (repeatable; needs --data).
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
