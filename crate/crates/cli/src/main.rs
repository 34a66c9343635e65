mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Stereotype benchmark harness: MCSB evaluation, metrics, augmentation,
/// fine-tune data and bag-of-words attribution.
///
/// Settings resolve as environment > flags > config file > defaults. The
/// API key is read only from STEREOPROBE_API_KEY.
#[derive(Debug, Parser)]
#[command(name = "stereoprobe", version)]
pub struct Cli {
    /// TOML config file (adapter, model, parallelism, timeout_secs,
    /// max_retries, seed, max_tokens, temperature).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print errors to stderr as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw dataset file into a normalized corpus (JSONL).
    Ingest(IngestArgs),
    /// Per-bias and per-target counts of a corpus.
    Stats(StatsArgs),
    /// Seeded per-bias train/test partition.
    Split(SplitArgs),
    /// Evaluate a corpus against a model, or resume a partial run.
    Eval(EvalArgs),
    /// Stereotype-selection ratios for a run.
    Metrics(MetricsArgs),
    /// Signed differences of variant runs against a baseline run.
    Delta(DeltaArgs),
    /// Train-tag by test-tag matrix of stereotype ratios.
    Cross(CrossArgs),
    /// Paraphrase a training corpus.
    Augment(AugmentArgs),
    /// Emit or validate fine-tuning files.
    #[command(subcommand)]
    Tuneprep(TuneprepCommand),
    /// Bag-of-words attribution for a run.
    Bow(BowArgs),
    /// Write every table for a run into a directory.
    Report(ReportArgs),
    /// Probe an adapter.
    Healthcheck(HealthArgs),
}

#[derive(Debug, Args, Clone)]
pub struct AdapterArgs {
    /// `mock:<policy>` or an http(s) base URL.
    #[arg(long)]
    pub adapter: Option<String>,
    /// Model name sent to HTTP adapters.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// md, csv or json.
    #[arg(long, default_value = "md")]
    pub format: String,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// stereoset or crowspairs.
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training items per bias type (default 20 for StereoSet, 8 for CrowS-Pairs).
    #[arg(long)]
    pub per_bias: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus to evaluate (not needed with --resume).
    #[arg(long, required_unless_present = "resume")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Defaults to the run directory's name.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Finish a partial run using its stored manifest.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub adapter: AdapterArgs,
    /// implicit or explicit.
    #[arg(long, default_value = "implicit")]
    pub mode: String,
    /// Append the fairness sentence to the system message.
    #[arg(long)]
    pub sysrole: bool,
    /// Comma-separated bias hint words.
    #[arg(long, conflicts_with = "hints_file")]
    pub hints: Option<String>,
    /// File with one hint word per line.
    #[arg(long)]
    pub hints_file: Option<PathBuf>,
    /// seeded_shuffle or file_order.
    #[arg(long, default_value = "seeded_shuffle")]
    pub binding: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Free-form dataset reference stored in the manifest.
    #[arg(long, default_value = "")]
    pub dataset_ref: String,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    /// bias or bias_and_target.
    #[arg(long, default_value = "bias")]
    pub group_by: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DeltaArgs {
    #[arg(long)]
    pub baseline: PathBuf,
    #[arg(long, default_value = "NFNA")]
    pub baseline_tag: String,
    /// `TAG=RUN_DIR`, repeatable; columns keep the given order.
    #[arg(long = "variant", required = true)]
    pub variants: Vec<String>,
    #[arg(long, default_value = "bias")]
    pub group_by: String,
    /// Use U+2212 for negative deltas in Markdown.
    #[arg(long)]
    pub typographic_minus: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CrossArgs {
    /// `TRAIN_TAG:TEST_TAG=RUN_DIR`, repeatable.
    #[arg(long = "run", required = true)]
    pub runs: Vec<String>,
    #[arg(long, default_value = "bias")]
    pub group_by: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub adapter: AdapterArgs,
    /// t5 or instruct.
    #[arg(long, default_value = "t5")]
    pub template: String,
    /// Instruction text for the instruct template.
    #[arg(long)]
    pub instruction: Option<String>,
    /// replace or append.
    #[arg(long, default_value = "replace")]
    pub mode: String,
    /// abort or skip.
    #[arg(long, default_value = "abort")]
    pub on_error: String,
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum TuneprepCommand {
    /// Write a chat-format fine-tuning file.
    Emit(TuneEmitArgs),
    /// Check a fine-tuning file's structure and counts.
    Validate(TuneValidateArgs),
}

#[derive(Debug, Args)]
pub struct TuneEmitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// ftna, fta_instruct, fta_t5, bow_hinted or sysrole.
    #[arg(long)]
    pub variant: String,
    #[arg(long, default_value = "implicit")]
    pub mode: String,
    #[arg(long, conflicts_with = "hints_file")]
    pub hints: Option<String>,
    #[arg(long)]
    pub hints_file: Option<PathBuf>,
    #[arg(long, default_value = "seeded_shuffle")]
    pub binding: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Supervised label in implicit mode: anti_stereotype or unrelated.
    #[arg(long, default_value = "anti_stereotype")]
    pub implicit_target: String,
}

#[derive(Debug, Args)]
pub struct TuneValidateArgs {
    #[arg(long)]
    pub file: PathBuf,
    /// Training corpus the file was built from, for count checks.
    #[arg(long, requires = "per_bias")]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub per_bias: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BowArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Count context tokens as well as option tokens.
    #[arg(long)]
    pub include_context: bool,
    /// Write this many hint words (all-biases, stereotype direction).
    #[arg(long, requires = "hints_out")]
    pub hints: Option<usize>,
    #[arg(long)]
    pub hints_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated formats.
    #[arg(long, default_value = "md,csv")]
    pub formats: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct HealthArgs {
    #[command(flatten)]
    pub adapter: AdapterArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.json;
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            if json {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code)
        }
    }
}
