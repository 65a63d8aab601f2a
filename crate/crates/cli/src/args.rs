use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use convtrace::attacks::AttackKind;
use convtrace::classify::ClassifierKind;

#[derive(Debug, Parser)]
#[command(
    name = "convtrace",
    version,
    about = "Convolutional-trace image forensics pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled corpus from a TOML spec
    Synth(SynthArgs),
    /// Extract one trace per manifest image into a feature CSV
    Extract(ExtractArgs),
    /// Apply one perturbation to every image of a manifest
    Attack(AttackArgs),
    /// Train a classifier on feature CSVs and save the model
    Train(TrainArgs),
    /// Evaluate the classifier bank and write accuracy grids
    Eval(EvalArgs),
    /// Apply a saved model to a feature CSV
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with one or more [[dataset]] tables
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory for images and manifest.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Neighborhood half-width (1, 2 or 3)
    #[arg(long, default_value_t = 1)]
    pub alpha: usize,
    /// Output feature CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// EM iteration cap
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// EM convergence threshold on the largest kernel change
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// random-square, blur:3|9|15, rotate:45|90|180, scale:+50|-50 or jpeg:50
    #[arg(long, value_parser = parse_attack, allow_hyphen_values = true)]
    pub attack: AttackKind,
    /// Output directory for attacked images and manifest.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Base seed; image i uses seed ^ i
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSVs to pool (comma-separated or repeated)
    #[arg(long, required = true, value_delimiter = ',')]
    pub features: Vec<PathBuf>,
    /// knn:K, lda, svm or rf
    #[arg(long, value_parser = parse_classifier)]
    pub classifier: ClassifierKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model file
    #[arg(long)]
    pub out: PathBuf,
    /// Skip per-feature z-scoring
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Stratified 70/30 holdout
    Split70,
    /// Stratified 5-fold cross-validation
    Cv5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Grouping {
    /// Real against all fake sources at once
    Pooled,
    /// Real against each fake source separately
    Pairwise,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// One grid column: comma-separated feature CSVs of one kernel size.
    /// Repeat for more kernel sizes.
    #[arg(long, required = true)]
    pub features: Vec<String>,
    /// Comma-separated list of knn, knn:K, lda, svm, rf or all
    #[arg(long, default_value = "all")]
    pub classifiers: String,
    #[arg(long, value_enum, default_value_t = Mode::Cv5)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = Grouping::Pooled)]
    pub grouping: Grouping,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for report files
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true, value_delimiter = ',')]
    pub features: Vec<PathBuf>,
    /// Per-image predictions CSV
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_attack(s: &str) -> Result<AttackKind, String> {
    s.parse().map_err(|e: convtrace::Error| e.to_string())
}

fn parse_classifier(s: &str) -> Result<ClassifierKind, String> {
    s.parse().map_err(|e: convtrace::Error| e.to_string())
}
