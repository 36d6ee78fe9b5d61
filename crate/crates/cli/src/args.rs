use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use whitekit::{FitScope, ProbeConfig, Protocol, WhiteningKind};

#[derive(Debug, Parser)]
#[command(name = "whitekit", version, about = "Whitening, IsoScore, probe and STS evaluation over embedding manifests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a whitening transform and write the whitened dataset plus the model files.
    Whiten(WhitenArgs),
    /// IsoScore of a dataset or embedding file, optionally paired with a whitened counterpart.
    Isoscore(IsoscoreArgs),
    /// Linear-probe classification accuracy, raw and optionally whitened.
    EvalCls(EvalClsArgs),
    /// STS Spearman correlation (x100), raw and optionally whitened.
    EvalSts(EvalStsArgs),
    /// PCA projection to k dimensions, written as CSV.
    Project(ProjectArgs),
    /// Write a synthetic fixture dataset.
    Synth(SynthArgs),
    /// Summarize a runs.jsonl log as a model x dataset table.
    Report(ReportArgs),
}

fn parse_kind(s: &str) -> Result<WhiteningKind, String> {
    s.parse().map_err(|e: whitekit::Error| e.to_string())
}

fn parse_scope(s: &str) -> Result<FitScope, String> {
    s.parse().map_err(|e: whitekit::Error| e.to_string())
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: whitekit::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct WhiteningFlags {
    /// pca, zca, chol, zca-cor or pca-cor
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<WhiteningKind>,
    /// Eigenvalue floor relative to the mean eigenvalue.
    #[arg(long, default_value_t = whitekit::whitening::DEFAULT_EPS_RELATIVE)]
    pub eps: f64,
    /// Rows the whitening statistics come from: train or all.
    #[arg(long, value_parser = parse_scope, default_value = "all")]
    pub fit_scope: FitScope,
}

#[derive(Debug, Args)]
pub struct WhitenArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// pca, zca, chol, zca-cor or pca-cor
    #[arg(long, value_parser = parse_kind)]
    pub kind: WhiteningKind,
    #[arg(long, default_value_t = whitekit::whitening::DEFAULT_EPS_RELATIVE)]
    pub eps: f64,
    #[arg(long, value_parser = parse_scope, default_value = "all")]
    pub fit_scope: FitScope,
    /// Output directory for the whitened dataset.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IsoscoreArgs {
    #[arg(long, conflicts_with = "embeddings", required_unless_present = "embeddings")]
    pub manifest: Option<PathBuf>,
    /// An EMB1 file, or a CSV with one embedding per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Manifest of the whitened counterpart; prints a before/after CSV.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Label for the rows (defaults to the manifest's model name).
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub csv: bool,
    /// Directory receiving runs.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeFlags {
    #[arg(long, default_value_t = ProbeConfig::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = ProbeConfig::default().rmsprop_decay)]
    pub decay: f64,
    #[arg(long, default_value_t = ProbeConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = ProbeConfig::default().max_epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = ProbeConfig::default().patience)]
    pub patience: usize,
    /// Comma-separated l2 grid.
    #[arg(long, value_delimiter = ',', default_values_t = ProbeConfig::default().l2_grid)]
    pub l2: Vec<f64>,
    #[arg(long, default_value_t = ProbeConfig::default().n_folds)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// kfold or fixed (uses the manifest's splits file).
    #[arg(long, value_parser = parse_protocol, default_value = "kfold")]
    pub protocol: Protocol,
}

impl ProbeFlags {
    pub fn config(&self) -> ProbeConfig {
        ProbeConfig {
            learning_rate: self.lr,
            rmsprop_decay: self.decay,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            l2_grid: self.l2.clone(),
            n_folds: self.folds,
            seed: self.seed,
            ..ProbeConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalClsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub probe: ProbeFlags,
    #[command(flatten)]
    pub whitening: WhiteningFlags,
    /// A dataset already whitened with `whitekit whiten`, evaluated as the second row.
    #[arg(long, conflicts_with = "kind")]
    pub whitened_manifest: Option<PathBuf>,
    /// Print the table as CSV.
    #[arg(long)]
    pub csv: bool,
    /// Directory receiving runs.jsonl and the table CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalStsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub whitening: WhiteningFlags,
    #[arg(long, conflicts_with = "kind")]
    pub whitened_manifest: Option<PathBuf>,
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recorded in the run log; STS evaluation itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Classification,
    Sts,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "classification")]
    pub task: TaskArg,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Distance of each class mean from the centroid, in noise standard deviations.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Strength of a shared dominant direction.
    #[arg(long, default_value_t = 0.0)]
    pub anisotropy: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value = "synthetic")]
    pub model_name: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Accuracy,
    #[value(name = "spearman_x100", alias = "spearman")]
    SpearmanX100,
    Isoscore,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A runs.jsonl log.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, value_enum, default_value = "accuracy")]
    pub metric: MetricArg,
    /// Raw value plus min/mean/max over the whitening kinds per model and dataset.
    #[arg(long)]
    pub ranges: bool,
    #[arg(long)]
    pub csv: bool,
}
