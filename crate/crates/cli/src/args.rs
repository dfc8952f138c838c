use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use viprof_core::corpus::{Language, Task};
use viprof_core::pipelines::{MethodKind, ScenarioVariant};
use viprof_core::report::Format;
use viprof_core::visual::SourceFilter;

#[derive(Debug, Parser)]
#[command(name = "viprof", version, about = "Age and gender profiling from posted text and shared images")]
pub struct Cli {
    /// Worker threads for folds and per-class training.
    #[arg(long, global = true, env = "VIPROF_JOBS")]
    pub jobs: Option<usize>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus directory into a single JSON snapshot.
    Ingest(IngestArgs),
    /// Image statistics per language, age range and gender.
    Stats(StatsArgs),
    /// Build a subject-independent fold plan.
    Folds(FoldsArgs),
    /// Compute text or visual features.
    #[command(subcommand)]
    Featurize(FeaturizeCommand),
    /// Train a one-vs-rest model from a feature file.
    Train(TrainArgs),
    /// Cross-validate one method.
    Eval(EvalArgs),
    /// Individual image classification under the image-source scenarios.
    EvalScenarios(ScenarioArgs),
    /// Cross-validate with every image as an instance.
    EvalPerImage(PerImageArgs),
    /// Compare 1000-token text chunks with individual images.
    EvalThousandWords(ThousandWordsArgs),
    /// Category histograms and difference lists between groups.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus with planted class signal.
    Synth(SynthArgs),
    /// Compute embeddings with a JSON-described network.
    Extract(ExtractArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Json,
    Markdown,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Markdown => Format::Markdown,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusArgs {
    /// Corpus snapshot (from `ingest`) or a corpus directory.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Language of a corpus directory.
    #[arg(long, default_value = "en")]
    pub lang: Language,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub lang: Language,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FoldsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub task: Task,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Accept folds that lack some class instead of failing.
    #[arg(long)]
    pub allow_missing_class: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum FeaturizeCommand {
    /// One vocabulary and one vector file per fold.
    Text(TextFeatArgs),
    /// Per-profile prototypes.
    Visual(VisualFeatArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct TextFeatArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub folds: PathBuf,
    /// Vocabulary size.
    #[arg(long, default_value_t = 10_000)]
    pub k: usize,
    /// Binary term presence instead of counts.
    #[arg(long)]
    pub binary: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VisualFeatArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "all")]
    pub source: SourceFilter,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct SvmArgs {
    /// Regularization trade-off.
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Seed for the solver's example order.
    #[arg(long = "svm-seed", default_value_t = 42)]
    pub svm_seed: u64,
    /// Train without the constant bias feature.
    #[arg(long)]
    pub no_bias: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// JSON lines with `profile_id` and either `entries` (sparse, with `dim`)
    /// or `values` (dense).
    #[arg(long)]
    pub features: PathBuf,
    /// Truth file (`id:::gender:::age`).
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub task: Task,
    #[command(flatten)]
    pub svm: SvmArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalCommon {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub folds: PathBuf,
    #[arg(long)]
    pub task: Task,
    /// Use a fold plan built for another task.
    #[arg(long)]
    pub shared_folds: bool,
    #[command(flatten)]
    pub svm: SvmArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// t1 (BoW 2k), t2 (BoW 10k), v3 (individual images), v4 (prototype),
    /// m3 (BoW 2k + prototype) or m6 (BoW 10k + prototype).
    #[arg(long)]
    pub method: MethodKind,
    /// Images used for visual methods: all, tweets or retweets.
    #[arg(long, default_value = "all")]
    pub source: SourceFilter,
    /// Binary term presence instead of counts.
    #[arg(long)]
    pub binary: bool,
    /// Scale the text and image blocks to unit norm before concatenating.
    #[arg(long)]
    pub normalize_blocks: bool,
    #[command(flatten)]
    pub common: EvalCommon,
}

#[derive(Debug, Args, Serialize)]
pub struct ScenarioArgs {
    /// Scenario variants to run: a, b, c (default: all three).
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<ScenarioVariant>,
    #[command(flatten)]
    pub common: EvalCommon,
}

#[derive(Debug, Args, Serialize)]
pub struct PerImageArgs {
    #[command(flatten)]
    pub common: EvalCommon,
}

#[derive(Debug, Args, Serialize)]
pub struct ThousandWordsArgs {
    /// Tokens per text instance.
    #[arg(long, default_value_t = 1000)]
    pub chunk: usize,
    #[arg(long)]
    pub binary: bool,
    #[command(flatten)]
    pub common: EvalCommon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Gender,
    Age,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_enum)]
    pub group_by: GroupBy,
    /// Categories per difference list (half for each side).
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Category names, one per line (default: the built-in 1000 names).
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// JSON spec; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub lang: Option<Language>,
    #[arg(long)]
    pub profiles: Option<usize>,
    #[arg(long)]
    pub age_classes: Option<usize>,
    #[arg(long)]
    pub gender_classes: Option<usize>,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub retweet_fraction: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub text_signal: Option<f64>,
    #[arg(long)]
    pub tweets: Option<usize>,
    /// Also emit softmax1000 category scores.
    #[arg(long)]
    pub category_scores: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// Network description (`.json`).
    #[arg(long)]
    pub model: PathBuf,
    /// images.csv with a `path` column.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory that relative image paths are resolved against (default:
    /// the manifest's directory).
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
