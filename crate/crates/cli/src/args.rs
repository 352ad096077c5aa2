//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "textcf", about = "Text-aware collaborative filtering for implicit feedback")]
pub struct Cli {
    /// Worker threads for evaluation and encoding; 1 gives bit-identical reruns.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset bundle from raw files or the synthetic generator.
    Prepare(PrepareArgs),
    /// Train a model on one fold of a bundle.
    Train(TrainArgs),
    /// Evaluate a trained run on its held-out fold.
    Evaluate(EvaluateArgs),
    /// Top-K items for a user, or ranking of ad-hoc texts.
    Recommend(RecommendArgs),
    /// Per-word saliency of a predicted rating.
    Saliency(SaliencyArgs),
    /// Finite-difference check of every gradient on a toy instance.
    GradCheck(GradCheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Output directory of the bundle.
    #[arg(long)]
    pub out: PathBuf,

    /// Generate a planted-topic dataset instead of reading files.
    #[arg(long, conflicts_with_all = ["corpus", "likes", "tags"])]
    pub synthetic: bool,

    /// `item_id<TAB>text` lines.
    #[arg(long, required_unless_present = "synthetic")]
    pub corpus: Option<PathBuf>,
    /// One line per user: count followed by item ids.
    #[arg(long, required_unless_present = "synthetic")]
    pub likes: Option<PathBuf>,
    /// One line per item: count followed by tag ids.
    #[arg(long)]
    pub tags: Option<PathBuf>,

    #[arg(long)]
    pub min_word_freq: Option<usize>,
    #[arg(long)]
    pub min_user_likes: Option<usize>,
    #[arg(long)]
    pub min_tag_items: Option<usize>,

    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub doc_len: Option<usize>,
    #[arg(long)]
    pub tag_noise: Option<f64>,
    /// Seed of the synthetic generator.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Bundle directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for config, report, manifest and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a run directory or a resumable checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Pretrained embeddings, `token<TAB>values` lines.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,

    #[arg(long, value_parser = ["warm", "cold"])]
    pub fold_mode: Option<String>,
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub num_folds: Option<usize>,
    #[arg(long)]
    pub fold_seed: Option<u64>,

    #[arg(long, value_parser = ["average", "gru"])]
    pub encoder: Option<String>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long)]
    pub hidden1: Option<usize>,
    /// Top layer size, which is also the factor dimension.
    #[arg(long)]
    pub hidden2: Option<usize>,
    #[arg(long)]
    pub dropout_embed: Option<f64>,
    #[arg(long)]
    pub dropout_layer1: Option<f64>,
    #[arg(long)]
    pub dropout_layer2: Option<f64>,

    #[arg(long, value_enum)]
    pub mtl: Option<Switch>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub neg_tag_weight: Option<f64>,
    #[arg(long)]
    pub l2_user: Option<f64>,

    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub batch_users: Option<usize>,
    #[arg(long)]
    pub max_updates: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub monitor_m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Bundle directory; defaults to the one recorded in the run manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_parser = ["warm", "cold", "tags"])]
    pub protocol: Option<String>,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,100")]
    pub m: Vec<usize>,
    #[arg(long, value_parser = ["fold", "all"], default_value = "fold")]
    pub candidate_pool: String,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub user: usize,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Rank the lines of this file as new items instead of the catalogue.
    #[arg(long)]
    pub item_text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub user: usize,
    #[arg(long, required_unless_present = "item_text", conflicts_with = "item_text")]
    pub item: Option<u32>,
    /// Score the text of this file as a new item.
    #[arg(long)]
    pub item_text: Option<PathBuf>,
    #[arg(long, value_parser = ["tsv", "html"], default_value = "tsv")]
    pub format: String,
    #[arg(long, value_parser = ["l2", "max"], default_value = "l2")]
    pub norm: String,
    /// Output file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, value_parser = ["average", "gru"], default_value = "gru")]
    pub encoder: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
