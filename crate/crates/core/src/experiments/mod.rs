//! Evaluation runs, the zero-shot sufficiency probe, ablation corpora and
//! report output.

mod ablation;
mod probe;
mod report;
mod run;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use ablation::{reduce_diversity, subsample_by_size};
pub use probe::{probe_prompt, run_probe, sufficiency_probe, ProbeOutcome, SufficiencyVerdict, Verdict};
pub use report::{emit_report, ReportFormat};
pub use run::{load_eval_set, run_evaluation, RunOutcome, RunSnapshot, UE_SCOPE};

use crate::data::{DataError, SplitPart};
use crate::gateway::{EndpointConfig, GatewayError};
use crate::jsonl::JsonlError;
use crate::metrics::{BootstrapConfig, MatcherConfig, MetricError};
use crate::taskgen::{Subtask, TaskgenError};
use crate::uncertainty::MaskError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} does not exist")]
    MissingPath(PathBuf),
    #[error("run directory {0} holds a different run; choose another run id")]
    RunExists(PathBuf),
    #[error("every request failed ({failed} of {attempted}); last error: {last_error}")]
    Transport { failed: usize, attempted: usize, last_error: String },
    #[error("aborted after {failed} failed requests of {planned} planned; partial results in {manifest}")]
    PartialResults { failed: usize, planned: usize, manifest: PathBuf },
    #[error("fraction {0} is out of range")]
    Fraction(f64),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Taskgen(#[from] TaskgenError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    File(#[from] JsonlError),
}

/// Everything that determines an evaluation run; written verbatim to the
/// run directory as `config.snapshot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub corpus: PathBuf,
    pub criteria: PathBuf,
    /// Split manifest; without one the whole eligible corpus is evaluated.
    #[serde(default)]
    pub split: Option<PathBuf>,
    #[serde(default)]
    pub split_part: SplitPart,
    /// Template directory; built-in defaults when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    pub endpoint: EndpointConfig,
    pub subtasks: Vec<Subtask>,
    pub matcher: MatcherConfig,
    pub bootstrap: BootstrapConfig,
    pub max_inflight: usize,
    #[serde(default)]
    pub allow_unreviewed: bool,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    1024
}

impl RunConfig {
    pub fn new(run_id: impl Into<String>, corpus: impl Into<PathBuf>, criteria: impl Into<PathBuf>, endpoint: EndpointConfig) -> Self {
        Self {
            run_id: run_id.into(),
            corpus: corpus.into(),
            criteria: criteria.into(),
            split: None,
            split_part: SplitPart::Test,
            templates: None,
            endpoint,
            subtasks: Subtask::ALL.to_vec(),
            matcher: MatcherConfig::default(),
            bootstrap: BootstrapConfig::default(),
            max_inflight: 8,
            allow_unreviewed: false,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.run_id.is_empty()
            || !self.run_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            || self.run_id.starts_with('.')
        {
            return bad("run_id must be non-empty and use only letters, digits, '-', '_' or '.'");
        }
        if self.subtasks.is_empty() {
            return bad("no subtasks enabled");
        }
        if self.max_inflight == 0 {
            return bad("max_inflight must be positive");
        }
        if self.bootstrap.iterations == 0 {
            return bad("bootstrap iterations must be positive");
        }
        if !(self.matcher.threshold > 0.0 && self.matcher.threshold <= 1.0) {
            return bad("matcher threshold must be in (0, 1]");
        }
        let paths = [Some(&self.corpus), Some(&self.criteria), self.split.as_ref(), self.templates.as_ref()];
        for p in paths.into_iter().flatten() {
            if !p.exists() {
                return Err(ExperimentError::MissingPath(p.clone()));
            }
        }
        Ok(())
    }
}
