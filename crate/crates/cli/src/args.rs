use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use concord_core::classifier::BackendKind;
use concord_core::triage::{Category, EvalScope};
use concord_core::Split;
use url::Url;

#[derive(Debug, Parser)]
#[command(
    name = "concord",
    version,
    about = "Audit a labeled dialog corpus with a paraphrase classifier"
)]
pub struct Cli {
    /// TOML file with defaults for any flag; flags win over the file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and summarize its labels.
    Ingest(IngestArgs),
    /// Replace usernames in turn texts.
    Anonymize(AnonymizeArgs),
    /// Build, re-split or export pair datasets.
    #[command(subcommand)]
    Pairs(PairsCommand),
    /// Start a training job on the train and val partitions.
    Train(TrainArgs),
    /// Predict on a partition and write prediction JSONL.
    Predict(PredictArgs),
    /// Score predictions against the gold labels.
    Evaluate(EvaluateArgs),
    /// Write the ranked disagreement queue.
    Disagreements(DisagreementArgs),
    /// Run the review service.
    #[command(subcommand)]
    Triage(TriageCommand),
    /// Record verdicts in the ledger.
    #[command(subcommand)]
    Verdict(VerdictCommand),
    /// Replay the ledger over the base corpus and write the result.
    Apply(ApplyArgs),
    /// Advance the review rounds.
    #[command(subcommand)]
    Round(RoundCommand),
    /// Print the report of every round.
    Report(ReportArgs),
    /// Run one full round on a corpus and write its disagreement queue.
    Audit(AuditArgs),
    /// Serve the built-in token-overlap classifier over the /v1 protocol.
    ReferenceBackend(ReferenceArgs),
}

#[derive(Debug, Subcommand)]
pub enum PairsCommand {
    /// Filter hapax labels, build every ordered pair and split.
    Build(PairsBuildArgs),
    /// Re-split an existing pair TSV.
    Split(PairsSplitArgs),
    /// Write one partition, optionally balanced.
    Export(PairsExportArgs),
}

#[derive(Debug, Subcommand)]
pub enum TriageCommand {
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum VerdictCommand {
    Add(VerdictAddArgs),
}

#[derive(Debug, Subcommand)]
pub enum RoundCommand {
    Next(RoundNextArgs),
}

#[derive(Debug, Args, Default)]
pub struct BackendArgs {
    /// oracle, lexical or remote. Defaults to remote when an endpoint is known.
    #[arg(long, value_name = "KIND")]
    pub backend: Option<BackendKind>,
    /// Remote classifier base URL; falls back to CONCORD_BACKEND_URL.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<Url>,
    /// Score at or above which a pair is predicted a paraphrase.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Directory for the TSV slices sent to a remote trainer.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SplitArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train,val,test fractions.
    #[arg(long, value_delimiter = ',', value_name = "T,V,E")]
    pub fractions: Option<Vec<f64>>,
    /// Exact train,val,test sizes; overrides fractions.
    #[arg(long, value_delimiter = ',', value_name = "T,V,E")]
    pub counts: Option<Vec<usize>>,
    /// Keep every pair of a question in one partition.
    #[arg(long)]
    pub group_by_question: bool,
    /// Shuffle without keeping the positive ratio per partition.
    #[arg(long)]
    pub no_stratify: bool,
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub min_label_count: Option<usize>,
    /// Partition the model is evaluated on: train, val, test or all.
    #[arg(long)]
    pub scope: Option<EvalScope>,
    /// JSON object passed to the trainer.
    #[arg(long, value_name = "FILE")]
    pub train_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Also write the corpus back out in canonical form.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub min_label_count: Option<usize>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("names_source").required(true).multiple(true).args(["names", "name"])))]
pub struct AnonymizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// File with one username per line.
    #[arg(long, value_name = "FILE")]
    pub names: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    pub name: Vec<String>,
    /// Word list replacing the bundled dictionary.
    #[arg(long, value_name = "FILE")]
    pub dictionary: Option<PathBuf>,
    /// Replace usernames that are also dictionary words.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsBuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub min_label_count: Option<usize>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsSplitArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsExportArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub split: Split,
    /// Keep every positive and as many sampled negatives.
    #[arg(long)]
    pub balance: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, value_name = "FILE")]
    pub train_config: Option<PathBuf>,
    /// Poll until the job finishes.
    #[arg(long)]
    pub wait: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: EvalScope,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: EvalScope,
}

#[derive(Debug, Args)]
pub struct DisagreementArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: EvalScope,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WorkflowArgs {
    /// Base corpus; every later version is derived from it and the ledger.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ledger: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub workflow: WorkflowArgs,
    #[arg(long)]
    pub addr: Option<SocketAddr>,
    /// Bearer token required by the API.
    #[arg(long)]
    pub token: Option<String>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("revision").args(["relabel", "merge_from", "edit"])))]
pub struct VerdictAddArgs {
    #[command(flatten)]
    pub workflow: WorkflowArgs,
    #[arg(long = "pair", value_name = "PAIR_ID")]
    pub pair_id: String,
    /// prediction_error, annotation_error or prep_error (or pred/ann/prep).
    #[arg(long)]
    pub category: Category,
    #[arg(long)]
    pub actor: String,
    #[arg(long, default_value = "")]
    pub note: String,
    /// Relabel this turn; needs --label.
    #[arg(long, value_name = "TURN_ID", requires = "label")]
    pub relabel: Option<String>,
    #[arg(long, requires = "relabel")]
    pub label: Option<String>,
    /// Merge this label into --merge-into.
    #[arg(long, value_name = "LABEL", requires = "merge_into")]
    pub merge_from: Option<String>,
    #[arg(long, value_name = "LABEL", requires = "merge_from")]
    pub merge_into: Option<String>,
    /// Replace the text of this turn; needs --text.
    #[arg(long, value_name = "TURN_ID", requires = "text")]
    pub edit: Option<String>,
    #[arg(long, requires = "edit")]
    pub text: Option<String>,
    #[arg(long)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ledger: PathBuf,
    /// Also apply revisions staged in the round still under review.
    #[arg(long)]
    pub include_pending: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RoundNextArgs {
    #[command(flatten)]
    pub workflow: WorkflowArgs,
    #[arg(long)]
    pub actor: String,
    #[arg(long)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub workflow: WorkflowArgs,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Disagreement queue JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[arg(long)]
    pub addr: Option<SocketAddr>,
    #[arg(long)]
    pub threshold: Option<f64>,
}
