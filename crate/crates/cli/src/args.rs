use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "tagdistill",
    version,
    about = "Distill LLM segment annotations into a compact classifier"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Workspace directory holding every stage's artifacts.
    #[arg(short = 'w', long, global = true, env = "TAGDISTILL_WORKSPACE", default_value = ".")]
    pub workspace: PathBuf,
    /// Scenario file to import (ingest only; later stages read the workspace copy).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Top-level seed; each stage derives its own from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Use the offline keyword teacher instead of an HTTP endpoint.
    #[arg(long, global = true)]
    pub mock: bool,
    #[arg(long, global = true, default_value = "http://127.0.0.1:8000/v1/chat/completions")]
    pub endpoint_url: String,
    #[arg(long, global = true, default_value = "llama-3.1-70b-instruct")]
    pub model: String,
    /// Maximum teacher requests in flight.
    #[arg(long, global = true, default_value_t = 4)]
    pub concurrency: usize,
    /// Teacher retries per document after the first attempt.
    #[arg(long, global = true, default_value_t = 2)]
    pub retries: usize,
    /// Documents kept per corpus at ingest; 0 keeps all.
    #[arg(long, global = true, default_value_t = 5000)]
    pub cap: usize,
    /// Shape of the summary printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, its gold labels and a matching scenario.
    Synth(SynthArgs),
    /// Import a corpus file and the scenario into the workspace.
    Ingest(IngestArgs),
    /// Label every document with the teacher.
    Annotate(AnnotateArgs),
    /// Pick the stratified subset that experts validate.
    SampleValidation(SampleArgs),
    /// Serve the expert review API and UI.
    ServeReview(ServeArgs),
    /// Review every pending task automatically, from gold labels when present.
    SimulateReview(SimulateArgs),
    /// Export validated annotations and split segments into train/test/in-context.
    BuildSplits(SplitArgs),
    /// Train the native student on the train split.
    Train(TrainArgs),
    /// Write the train/test exchange files for an external trainer.
    ExportExternal(ExportArgs),
    /// Import test-split predictions of an external model.
    ImportPredictions(ImportArgs),
    /// Score every model's predictions on the test split.
    Evaluate(EvaluateArgs),
    /// Pairwise Wilcoxon signed-rank comparisons of all evaluated models.
    Compare(CompareArgs),
    /// Time native-student inference.
    Bench(BenchArgs),
    /// Assemble metrics, comparisons and timings into report files.
    Report(ReportArgs),
    /// Run every stage in order with the offline teacher.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    pub docs: usize,
    /// Label noise planted in the emitted (not gold) labels.
    #[arg(long, default_value_t = 0.0)]
    pub label_noise: f64,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Corpus file, one `{"id", "text"}` object per line.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    /// Label-swap probability of the offline teacher.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Keyword map for the offline teacher; defaults to the synthetic one.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    #[arg(long, default_value_t = tagdistill_core::teacher::DEFAULT_MAX_EXAMPLES)]
    pub max_examples: usize,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    /// Base of the exponential retry backoff, in milliseconds.
    #[arg(long, default_value_t = 1000)]
    pub backoff_ms: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 20)]
    pub min_per_label: usize,
    /// Subset size; defaults to min(500, 10% of segments).
    #[arg(long)]
    pub target: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Listening port; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of review UI assets.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Gold annotations the simulated expert applies; defaults to the
    /// synthetic gold file, else teacher labels are accepted as they are.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long, default_value = "simulated")]
    pub reviewer: String,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// In-context examples per label.
    #[arg(long, default_value_t = 2)]
    pub k_ic: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub l2: f64,
    /// log2 of the hashed feature dimension.
    #[arg(long, default_value_t = 18)]
    pub dimension_bits: u32,
    #[arg(long)]
    pub no_class_weights: bool,
    #[arg(long, default_value_t = tagdistill_core::corpus::DEFAULT_WEIGHT_CAP)]
    pub weight_cap: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {}

#[derive(Debug, Clone, Args)]
pub struct ImportArgs {
    /// Predictions file, one `{"id", "scores"}` object per test segment.
    #[arg(long)]
    pub file: PathBuf,
    /// Name the model appears under in evaluation and reports.
    #[arg(long)]
    pub model_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Interval {
    Wald,
    Wilson,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, value_enum, default_value_t = Interval::Wald)]
    pub interval: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Correction {
    None,
    Half,
    Lattice,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Continuity correction of the normal approximation.
    #[arg(long, value_enum, default_value_t = Correction::Lattice)]
    pub correction: Correction,
    /// Largest n_effective evaluated exactly.
    #[arg(long, default_value_t = 25)]
    pub exact_max_n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Corpus documents timed per pass.
    #[arg(long, default_value_t = 100)]
    pub docs: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Include timings from `bench`; they vary run to run.
    #[arg(long)]
    pub with_bench: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Generate the corpus instead of reading `--input`.
    #[arg(long)]
    pub synth: bool,
    /// Corpus file when not synthesizing.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub docs: usize,
    /// Label-swap probability of the offline teacher.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 2)]
    pub k_ic: usize,
    /// Skip the timing stage.
    #[arg(long)]
    pub no_bench: bool,
}
