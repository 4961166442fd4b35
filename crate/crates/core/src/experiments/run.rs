use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, RunConfig};
use crate::data::{load_criteria, CriteriaSet, DatasetSplit};
use crate::gateway::{ChatClient, ChatRequest, Embedder, Message};
use crate::jsonl;
use crate::metrics::{evaluate_subtask, save_reports, EvalContext, Matcher, Meteor, MetricReport};
use crate::taskgen::{save_predictions, GroundTruth, ParsedPrediction, PredictionRecord, Subtask, TemplateSet};
use crate::uncertainty::{load_corpus, CorpusEntry};

/// The UE prompt is issued for every note, complete ones included.
pub const UE_SCOPE: &str = "all_notes";

/// Abort once more than this share of planned requests has failed.
const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub config: RunConfig,
    pub templates_fingerprint: String,
    pub ue_scope: String,
    pub eval_notes: usize,
    pub toolkit_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub reports: Vec<MetricReport>,
    pub planned: usize,
    pub failed: usize,
    pub cache_hits: usize,
}

#[derive(Serialize)]
struct PartialManifest<'a> {
    run_id: &'a str,
    planned: usize,
    completed: usize,
    failed: usize,
    errors: Vec<String>,
    predictions: &'a str,
}

/// Criteria and the notes to evaluate: eligible corpus entries, restricted
/// to one split part when a manifest is configured.
pub fn load_eval_set(config: &RunConfig) -> Result<(CriteriaSet, Vec<CorpusEntry>), ExperimentError> {
    let criteria = load_criteria(&config.criteria)?;
    let corpus = load_corpus(&config.corpus)?;
    let total = corpus.len();
    let mut entries: Vec<CorpusEntry> = corpus.into_iter().filter(|e| e.eligible(config.allow_unreviewed)).collect();
    if entries.len() < total {
        log::info!("{} of {total} corpus entries are not eligible (unreviewed or rejected)", total - entries.len());
    }
    if let Some(path) = &config.split {
        let split: DatasetSplit = jsonl::read_json(path)?;
        let keep: HashSet<&str> = split.part(config.split_part).iter().map(String::as_str).collect();
        entries.retain(|e| keep.contains(e.id()));
    }
    if entries.is_empty() {
        return Err(ExperimentError::Config("no eligible notes to evaluate".into()));
    }
    Ok((criteria, entries))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Runs every (note, subtask) request, persists predictions and scores
/// them. With a warm response cache no request reaches the endpoint.
pub fn run_evaluation(
    config: &RunConfig,
    client: &dyn ChatClient,
    embedder: Option<&dyn Embedder>,
    out_root: &Path,
) -> Result<RunOutcome, ExperimentError> {
    config.validate()?;
    let templates = match &config.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::default(),
    };
    for &t in &config.subtasks {
        templates.get(t)?;
    }
    let (criteria, entries) = load_eval_set(config)?;

    let run_dir = out_root.join(&config.run_id);
    let snapshot_path = run_dir.join("config.snapshot");
    if snapshot_path.exists() {
        let previous: RunSnapshot = jsonl::read_json(&snapshot_path)?;
        // compare as written: secrets such as the API key are never persisted
        let same = serde_json::to_value(&previous.config).ok() == serde_json::to_value(config).ok();
        if !same {
            return Err(ExperimentError::RunExists(run_dir));
        }
        log::info!("resuming run {}", config.run_id);
    }
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let snapshot = RunSnapshot {
        config: config.clone(),
        templates_fingerprint: templates.fingerprint(),
        ue_scope: UE_SCOPE.into(),
        eval_notes: entries.len(),
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
    };
    jsonl::write_json(&snapshot_path, &snapshot)?;

    let log_lines = Mutex::new(Vec::new());
    let note = |line: String| {
        log::info!("{line}");
        log_lines.lock().push(format!("{} {line}", chrono::Utc::now().to_rfc3339()));
    };
    let work: Vec<(usize, Subtask)> = entries
        .iter()
        .enumerate()
        .flat_map(|(i, _)| config.subtasks.iter().map(move |&t| (i, t)))
        .collect();
    let planned = work.len();
    note(format!("run {} started: {} notes, {planned} requests", config.run_id, entries.len()));

    let results: Vec<Mutex<Option<PredictionRecord>>> = (0..planned).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let cache_hits = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let errors = Mutex::new(Vec::new());
    let budget = (planned as f64 * MAX_FAILURE_RATE).floor() as usize;

    let worker = || loop {
        if abort.load(Ordering::SeqCst) {
            break;
        }
        let k = next.fetch_add(1, Ordering::SeqCst);
        if k >= planned {
            break;
        }
        let (i, subtask) = work[k];
        let entry = &entries[i];
        let prompt = templates.render_prompt(subtask, entry.text()).expect("templates checked above");
        let mut req = ChatRequest::new(&config.endpoint.model_id, vec![Message::user(prompt)]);
        req.temperature = config.temperature;
        req.max_tokens = config.max_tokens;
        let record = match client.complete(&req) {
            Ok(resp) => {
                if resp.usage.cached {
                    cache_hits.fetch_add(1, Ordering::Relaxed);
                }
                PredictionRecord::from_raw(entry.id(), subtask, &resp.text)
            }
            Err(e) => {
                let n = failed.fetch_add(1, Ordering::SeqCst) + 1;
                errors.lock().push(format!("{} {subtask}: {e}", entry.id()));
                if n > budget {
                    abort.store(true, Ordering::SeqCst);
                }
                PredictionRecord::transport_failure(entry.id(), subtask, &e.to_string())
            }
        };
        *results[k].lock() = Some(record);
    };
    std::thread::scope(|s| {
        for _ in 0..config.max_inflight.min(planned) {
            s.spawn(worker);
        }
    });

    let failed = failed.into_inner();
    let cache_hits = cache_hits.into_inner();
    let records: Vec<PredictionRecord> = results.into_iter().filter_map(Mutex::into_inner).collect();
    let predictions_path = run_dir.join("predictions.records");
    save_predictions(&records, &predictions_path)?;
    let errors = errors.into_inner();
    note(format!("{} responses, {failed} failed, {cache_hits} from cache", records.len()));

    if abort.into_inner() {
        let succeeded = records.iter().filter(|r| r.transport_error.is_none()).count();
        let log_path = run_dir.join("log");
        let mut lines = log_lines.into_inner();
        lines.push(format!("aborted: {failed} failures exceed {:.0}% of {planned}", MAX_FAILURE_RATE * 100.0));
        fs::write(&log_path, lines.join("\n") + "\n").map_err(io_err(&log_path))?;
        if succeeded == 0 {
            return Err(ExperimentError::Transport {
                failed,
                attempted: records.len(),
                last_error: errors.last().cloned().unwrap_or_default(),
            });
        }
        let manifest = run_dir.join("partial.manifest");
        jsonl::write_json(
            &manifest,
            &PartialManifest {
                run_id: &config.run_id,
                planned,
                completed: succeeded,
                failed,
                errors: errors.into_iter().take(20).collect(),
                predictions: "predictions.records",
            },
        )?;
        return Err(ExperimentError::PartialResults { failed, planned, manifest });
    }

    let truths: Vec<GroundTruth> = entries.iter().map(|e| GroundTruth::from_entry(e, &criteria)).collect();
    let meteor = Meteor::default();
    let ctx = EvalContext {
        matcher: Matcher::new(config.matcher, embedder)?,
        embedder,
        meteor: &meteor,
        bootstrap: config.bootstrap,
    };
    let mut reports = Vec::new();
    for &t in &config.subtasks {
        let preds: Vec<ParsedPrediction> = records
            .iter()
            .filter(|r| r.subtask == t)
            .map(|r| r.parsed.clone())
            .collect();
        reports.push(evaluate_subtask(&config.run_id, t, &preds, &truths, &ctx)?);
    }
    save_reports(&reports, &run_dir.join("metrics.report"))?;
    note(format!("metrics written for {} subtasks", reports.len()));

    let log_path = run_dir.join("log");
    fs::write(&log_path, log_lines.into_inner().join("\n") + "\n").map_err(io_err(&log_path))?;
    Ok(RunOutcome { run_dir, reports, planned, failed, cache_hits })
}
