mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::OutputFormat;

/// Two-level assessment of second-language dialogues: annotation
/// merging, agreement, classical and language-model predictors, and
/// evaluation reports.
#[derive(Debug, Parser)]
#[command(name = "dialeval", version, propagate_version = true)]
pub struct Cli {
    /// Output form of reports and summaries.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads for cascade runs (0 = runtime default).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML configuration file (default: $DIALEVAL_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More diagnostics on stderr; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dialogue JSONL file and write it in canonical form.
    Ingest(IngestArgs),
    /// Merge two annotators' spans, resolve macro labels and split overall
    /// scores into agreed labels and an adjudication queue.
    MergeAnnotations(MergeArgs),
    /// Inter-annotator agreement (Krippendorff's alpha and Pearson r).
    Agreement(AgreementArgs),
    /// Seeded train/dev/test split.
    Split(SplitArgs),
    /// Write micro or macro feature vectors as CSV.
    Featurize(FeaturizeArgs),
    /// Train a classifier on a feature CSV and labels.
    Train(TrainArgs),
    /// Feature importance tables and common / aspect-specific feature sets.
    Importance(ImportanceArgs),
    /// Run the three-step cascade and write a run directory.
    RunCascade(CascadeArgs),
    /// Predict the overall score directly from the dialogue.
    RunOnestep(OnestepArgs),
    /// Score a run directory against gold labels.
    Evaluate(EvaluateArgs),
    /// Per-dialogue assessment report for a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dialogue JSONL to validate.
    #[arg(long)]
    pub input: PathBuf,
    /// Canonical corpus file to write.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Span annotations from two annotators.
    #[arg(long)]
    pub spans: Option<PathBuf>,
    /// Macro label annotations from two annotators.
    #[arg(long)]
    pub macro_labels: Option<PathBuf>,
    /// Overall score annotations from two annotators.
    #[arg(long)]
    pub overall: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Micro,
    Macro,
    Overall,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long, value_enum)]
    pub level: Level,
    /// Two annotators' spans (micro), macro labels or overall scores.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Corpus supplying the token units; required for micro agreement.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Also report micro agreement per feature.
    #[arg(long)]
    pub per_feature: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupingArg {
    ByConversation,
    PerDialogue,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// train:dev:test weights [default: 7:1:2].
    #[arg(long)]
    pub ratio: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub grouping: Option<GroupingArg>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureLevel {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    PerTurn,
    PerToken,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long, value_enum)]
    pub level: FeatureLevel,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Merged spans (micro level).
    #[arg(long)]
    pub spans: Option<PathBuf>,
    /// Resolved macro labels (macro level).
    #[arg(long)]
    pub macro_labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationArg>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Logistic,
    NaiveBayes,
    RandomForest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Four aspect models written into the output directory.
    Aspects,
    Topic,
    Tone,
    Opening,
    Closing,
    Overall,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSV from `featurize`.
    #[arg(long)]
    pub features: PathBuf,
    /// Macro label annotations (aspect targets) or overall annotations.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value = "aspects")]
    pub target: Target,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file, or a directory for `--target aspects`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// Directory of four aspect models; repeat once per classifier.
    #[arg(long)]
    pub aspect_models: Vec<PathBuf>,
    /// Overall-score model file; repeat once per classifier.
    #[arg(long)]
    pub overall_model: Vec<PathBuf>,
    /// Micro feature CSV for permutation importance of aspect models.
    #[arg(long, requires = "eval_labels")]
    pub eval_features: Option<PathBuf>,
    /// Macro labels matching `--eval-features`.
    #[arg(long, requires = "eval_features")]
    pub eval_labels: Option<PathBuf>,
    /// Macro feature CSV for permutation importance of overall models.
    #[arg(long, requires = "eval_overall")]
    pub eval_macro_features: Option<PathBuf>,
    /// Overall labels matching `--eval-macro-features`.
    #[arg(long, requires = "eval_macro_features")]
    pub eval_overall: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BindingArgs {
    /// Mock script for llm bindings that name none.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationArg>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CascadeArgs {
    /// Step-1 binding: gold:FILE or llm[:SCRIPT].
    #[arg(long)]
    pub step1: Option<String>,
    /// Step-2 binding: gold:FILE, classical:DIR or llm[:SCRIPT].
    #[arg(long)]
    pub step2: Option<String>,
    /// Step-3 binding: classical:FILE or llm[:SCRIPT].
    #[arg(long)]
    pub step3: Option<String>,
    #[command(flatten)]
    pub common: BindingArgs,
}

#[derive(Debug, Args)]
pub struct OnestepArgs {
    /// Overall binding: llm[:SCRIPT].
    #[arg(long, default_value = "llm")]
    pub step3: String,
    #[command(flatten)]
    pub common: BindingArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory from run-cascade or run-onestep.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub gold_spans: Option<PathBuf>,
    #[arg(long)]
    pub gold_macro: Option<PathBuf>,
    #[arg(long)]
    pub gold_overall: Option<PathBuf>,
    /// overall, macro:<aspect> or micro:<feature>; repeatable. Default:
    /// every task the gold labels support.
    #[arg(long)]
    pub task: Vec<String>,
    /// Where to write the evaluation reports as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Evaluation JSON written by `evaluate --output`.
    #[arg(long)]
    pub evals: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// 1 for domain and validation errors, 2 for configuration and I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<dialeval::Error>() {
        Some(e) if e.is_config_or_io() => 2,
        Some(_) => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
