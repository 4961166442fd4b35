//! `uadx`: build uncertainty-aware diagnosis benchmarks, evaluate model
//! endpoints on them and run the expert review service.

mod commands;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use error::{CliError, EXIT_OK, EXIT_VALIDATION};

#[derive(Debug, Parser)]
#[command(name = "uadx", version, about = "Uncertainty-aware diagnosis benchmark toolkit")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a criteria file and optionally check a notes file against it.
    CriteriaValidate(CriteriaValidateArgs),
    /// Extract and verify evidence spans with an LLM endpoint.
    Annotate(AnnotateArgs),
    /// Mask evidence in every annotated, evidence-complete note.
    Mask(MaskArgs),
    /// Build a 1:1 complete/masked corpus per disease.
    Balance(BalanceArgs),
    /// Split a corpus into train/validation/test, stratified by disease and completeness.
    Split(SplitArgs),
    /// Render instruction/input/output training records for the subtasks.
    Taskgen(TaskgenArgs),
    /// Evaluate a model endpoint on a corpus and score it with bootstrap intervals.
    Eval(EvalArgs),
    /// Ask a model whether each note holds enough evidence for its known diagnosis.
    Probe(ProbeArgs),
    /// Write stratified subsamples of a training corpus.
    AblateSize(AblateArgs),
    /// Write reduced-diversity training corpora restored to full size by duplication.
    AblateDiversity(AblateArgs),
    /// Merge metric reports into one structured or tabular file.
    Report(ReportArgs),
    /// Run the expert review HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
struct CriteriaValidateArgs {
    /// Criteria file (header line, then one criterion per line).
    #[arg(long)]
    criteria: PathBuf,
    /// Notes file to check: ids unique, text non-empty, diagnosis resolvable.
    #[arg(long)]
    notes: Option<PathBuf>,
}

/// Model endpoint and client behaviour shared by commands that call a model.
#[derive(Debug, Args, Serialize)]
struct EndpointArgs {
    /// Chat-completions URL.
    #[arg(long, env = "UADX_ENDPOINT")]
    endpoint: Option<String>,
    /// Model id sent with each request.
    #[arg(long, env = "UADX_MODEL")]
    model: Option<String>,
    /// Most requests in flight at once.
    #[arg(long, default_value_t = 8)]
    max_inflight: usize,
    /// Attempts per request for transient failures (429, 5xx, network).
    #[arg(long, default_value_t = 5)]
    retry_attempts: u32,
    /// Backoff before the second attempt, doubled on each further attempt.
    #[arg(long, default_value_t = 1000)]
    retry_base_ms: u64,
    /// Response cache directory; repeated requests are served from it.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AnnotateArgs {
    /// Notes file (one JSON record per line).
    #[arg(long)]
    notes: PathBuf,
    /// Criteria file (header line, then one criterion per line).
    #[arg(long)]
    criteria: PathBuf,
    /// Output annotation records.
    #[arg(long)]
    out: PathBuf,
    /// Human annotations of the same notes; prints kappa and span F1 against them.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Args, Serialize)]
struct MaskArgs {
    /// Notes file (one JSON record per line).
    #[arg(long)]
    notes: PathBuf,
    /// Annotation records produced by `annotate`.
    #[arg(long)]
    annotations: PathBuf,
    /// Criteria file (header line, then one criterion per line).
    #[arg(long)]
    criteria: PathBuf,
    /// Criteria to mask per note.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Seed for every random choice; same seed, same output.
    #[arg(long)]
    seed: u64,
    /// Output masked-note records.
    #[arg(long)]
    out: PathBuf,
    /// Also write the masked notes as review-service items (JSON array for POST /api/items).
    #[arg(long)]
    review_items: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BalanceArgs {
    /// Notes file (one JSON record per line).
    #[arg(long)]
    notes: PathBuf,
    /// Annotation records produced by `annotate`.
    #[arg(long)]
    annotations: PathBuf,
    /// Criteria file (header line, then one criterion per line).
    #[arg(long)]
    criteria: PathBuf,
    /// Criteria masked per note.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Seed for every random choice; same seed, same output.
    #[arg(long)]
    seed: u64,
    /// Review event log; approved/rejected decisions are applied to masked notes.
    #[arg(long)]
    event_log: Option<PathBuf>,
    /// Output corpus records.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SplitArgs {
    /// Corpus records produced by `balance`.
    #[arg(long)]
    corpus: PathBuf,
    /// `0.7,0.1,0.2` or `7:1:2`.
    #[arg(long, default_value = "7:1:2")]
    ratios: String,
    /// Seed for every random choice; same seed, same output.
    #[arg(long)]
    seed: u64,
    /// Include masked notes that have not been approved in review.
    #[arg(long)]
    allow_unreviewed: bool,
    /// Output split manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TaskgenArgs {
    /// Corpus records produced by `balance`.
    #[arg(long)]
    corpus: PathBuf,
    /// Criteria file (header line, then one criterion per line).
    #[arg(long)]
    criteria: PathBuf,
    /// Template directory (dd.txt, de.txt, ur.txt, ue.txt); built-ins otherwise.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Comma-separated subtasks (DD, DE, UR, UE).
    #[arg(long, default_value = "DD,DE,UR,UE")]
    subtasks: String,
    /// Split manifest; only notes in --part are rendered.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Split part to use: train, validation or test.
    #[arg(long, default_value = "train")]
    part: String,
    /// Include masked notes that have not been approved in review.
    #[arg(long)]
    allow_unreviewed: bool,
    /// Output training records.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Run id; the run directory is <out-dir>/<run-id>.
    #[arg(long)]
    run_id: String,
    /// Corpus records produced by `balance`.
    #[arg(long)]
    corpus: PathBuf,
    /// Criteria file (header line, then one criterion per line).
    #[arg(long)]
    criteria: PathBuf,
    /// Split manifest produced by `split`.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Split part to use: train, validation or test.
    #[arg(long, default_value = "test")]
    part: String,
    /// Template directory (dd.txt, de.txt, ur.txt, ue.txt); built-ins otherwise.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Comma-separated subtasks (DD, DE, UR, UE).
    #[arg(long, default_value = "DD,DE,UR,UE")]
    subtasks: String,
    /// Similarity needed for a predicted explanation to match a reference.
    #[arg(long, default_value_t = 0.7)]
    matcher_threshold: f64,
    /// Bootstrap iterations per metric.
    #[arg(long, default_value_t = 200)]
    bootstrap_iters: usize,
    /// Seed for bootstrap resampling and the stub embedder.
    #[arg(long)]
    seed: u64,
    /// Include masked notes that have not been approved in review.
    #[arg(long)]
    allow_unreviewed: bool,
    /// Sampling temperature sent with each request.
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Completion token limit sent with each request.
    #[arg(long, default_value_t = 1024)]
    max_tokens: u32,
    /// Embedding URL for explanation matching and BERTScore; the stub embedder otherwise.
    #[arg(long, env = "UADX_EMBED_ENDPOINT")]
    embed_endpoint: Option<String>,
    /// The embedding endpoint returns one vector per input token.
    #[arg(long)]
    embed_token_level: bool,
    /// Match explanations on token overlap only (no embeddings, no BERTScore).
    #[arg(long)]
    no_embeddings: bool,
    /// Parent of run directories.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Args, Serialize)]
struct ProbeArgs {
    /// Corpus records produced by `balance`.
    #[arg(long)]
    corpus: PathBuf,
    /// Criteria file (header line, then one criterion per line).
    #[arg(long)]
    criteria: PathBuf,
    /// Split manifest produced by `split`.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Split part to use: train, validation or test.
    #[arg(long, default_value = "test")]
    part: String,
    /// Include masked notes that have not been approved in review.
    #[arg(long)]
    allow_unreviewed: bool,
    /// Bootstrap iterations for the accuracy interval.
    #[arg(long, default_value_t = 200)]
    bootstrap_iters: usize,
    /// Seed for every random choice; same seed, same output.
    #[arg(long)]
    seed: u64,
    /// Output verdict records; a summary goes to <out>.summary.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Args, Serialize)]
struct AblateArgs {
    /// Training corpus records.
    #[arg(long)]
    corpus: PathBuf,
    /// Split manifest; its --part selects the training notes.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Split part to use: train, validation or test.
    #[arg(long, default_value = "train")]
    part: String,
    /// Fractions to generate, comma-separated (e.g. 0.1,0.5,0.9).
    #[arg(long, value_delimiter = ',', required = true)]
    fractions: Vec<f64>,
    /// Seed for every random choice; same seed, same output.
    #[arg(long)]
    seed: u64,
    /// Include masked notes that have not been approved in review.
    #[arg(long)]
    allow_unreviewed: bool,
    /// One corpus file per fraction is written here.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// metrics.report files or run directories.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// structured (JSON) or tabular (CSV).
    #[arg(long, default_value = "tabular")]
    format: String,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ServeArgs {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 8700)]
    port: u16,
    /// Append-only event log; replayed at startup.
    #[arg(long)]
    event_log: PathBuf,
    /// JSON array of {"reviewer_id", "token"}.
    #[arg(long)]
    reviewers_file: PathBuf,
    /// Show model identity to graders.
    #[arg(long)]
    unblinded: bool,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::CriteriaValidate(a) => commands::criteria_validate(&a),
        Command::Annotate(a) => commands::annotate(&a),
        Command::Mask(a) => commands::mask(&a),
        Command::Balance(a) => commands::balance(&a),
        Command::Split(a) => commands::split(&a),
        Command::Taskgen(a) => commands::taskgen(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Probe(a) => commands::probe(&a),
        Command::AblateSize(a) => commands::ablate(&a, commands::Ablation::Size),
        Command::AblateDiversity(a) => commands::ablate(&a, commands::Ablation::Diversity),
        Command::Report(a) => commands::report(&a),
        Command::Serve(a) => commands::serve(&a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            std::process::exit(code);
        }
    };
    init_logging(cli.verbose);
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_documented() {
        for sub in Cli::command().get_subcommands() {
            assert!(sub.get_about().is_some(), "{} has no description", sub.get_name());
            for arg in sub.get_arguments() {
                let id = arg.get_id().as_str();
                if ["help", "version", "verbose"].contains(&id) {
                    continue;
                }
                let documented = arg.get_help().is_some() || arg.get_long_help().is_some();
                assert!(
                    documented,
                    "{} --{id} has no help text",
                    sub.get_name()
                );
            }
        }
    }

    #[test]
    fn seed_is_required_where_randomness_is_used() {
        for name in ["mask", "balance", "split", "eval", "probe", "ablate-size", "ablate-diversity"] {
            let cmd = Cli::command();
            let sub = cmd.find_subcommand(name).unwrap();
            let seed = sub.get_arguments().find(|a| a.get_id() == "seed").unwrap_or_else(|| panic!("{name}"));
            assert!(seed.is_required_set(), "{name} --seed must be required");
        }
    }
}
