use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Serialize;
use serde_json::json;

use uadx::annotation::{
    annotate_evidence, compute_iaa, load_annotations, save_annotations, AnnotatedNote, AnnotationError,
    AnnotatorConfig,
};
use uadx::data::{
    load_criteria, load_notes, split_dataset, validate_corpus, Completeness, CriteriaSet, DatasetSplit, NoteRecord,
    SplitKey, SplitPart, SplitRatios,
};
use uadx::experiments::{
    emit_report, load_eval_set, reduce_diversity, run_evaluation, run_probe, subsample_by_size, ReportFormat,
};
use uadx::gateway::{
    CachingClient, ChatClient, EmbeddingCapability, Embedder, EndpointConfig, HttpChatClient, HttpEmbedder,
    InflightLimiter, ResponseCache, RetryPolicy, StubEmbedder, ENV_API_KEY,
};
use uadx::jsonl;
use uadx::metrics::{load_reports, BootstrapConfig, MatcherConfig};
use uadx::review::{
    serve_blocking, NewItem, ReviewPayload, ReviewStore, ReviewerRegistry, ServiceState,
};
use uadx::rng::derived_seed;
use uadx::taskgen::{export_training_file, render_all, Subtask, TemplateSet};
use uadx::uncertainty::{
    build_balanced_corpus, load_corpus, mask_evidence, save_corpus, save_masked, BalanceOptions, CorpusEntry,
    MaskError, ReviewDecisions,
};
use uadx::RunConfig;

use crate::error::CliError;
use crate::{
    AblateArgs, AnnotateArgs, BalanceArgs, CriteriaValidateArgs, EndpointArgs, EvalArgs, MaskArgs, ProbeArgs,
    ReportArgs, ServeArgs, SplitArgs, TaskgenArgs,
};

type Result<T> = std::result::Result<T, CliError>;

/// Dimension of the offline embedder used when no embedding endpoint is set.
const STUB_EMBED_DIM: usize = 64;

/// Run record written next to every output as `<out>.snapshot`.
#[derive(Serialize)]
struct Snapshot<'a, A: Serialize> {
    command: &'a str,
    args: &'a A,
    version: &'a str,
    seed: Option<u64>,
}

fn snapshot_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".snapshot");
    PathBuf::from(s)
}

fn write_snapshot<A: Serialize>(out: &Path, command: &str, args: &A, seed: Option<u64>) -> Result<()> {
    let snap = Snapshot { command, args, version: env!("CARGO_PKG_VERSION"), seed };
    jsonl::write_json(&snapshot_path(out), &snap)?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn split_part(s: &str) -> Result<SplitPart> {
    Ok(s.parse::<SplitPart>()?)
}

fn limiter(max_inflight: usize) -> Result<InflightLimiter> {
    if max_inflight == 0 {
        return Err(CliError::invalid("--max-inflight must be positive"));
    }
    Ok(InflightLimiter::new(max_inflight))
}

fn retry(args: &EndpointArgs) -> RetryPolicy {
    RetryPolicy { max_attempts: args.retry_attempts.max(1), base_delay: Duration::from_millis(args.retry_base_ms) }
}

fn endpoint_config(args: &EndpointArgs) -> Result<EndpointConfig> {
    let url = args
        .endpoint
        .clone()
        .ok_or_else(|| CliError::invalid("no endpoint: pass --endpoint or set UADX_ENDPOINT"))?;
    let model_id = args.model.clone().ok_or_else(|| CliError::invalid("no model: pass --model or set UADX_MODEL"))?;
    let api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
    Ok(EndpointConfig { url, api_key, model_id })
}

fn chat_client(args: &EndpointArgs, cache_dir: Option<&Path>) -> Result<(Arc<dyn ChatClient>, EndpointConfig)> {
    let cfg = endpoint_config(args)?;
    let http = HttpChatClient::new(cfg.clone(), retry(args), limiter(args.max_inflight)?)?;
    let client: Arc<dyn ChatClient> = match cache_dir {
        Some(dir) => Arc::new(CachingClient::new(http, ResponseCache::open(dir)?)),
        None => Arc::new(http),
    };
    Ok((client, cfg))
}

pub fn criteria_validate(args: &CriteriaValidateArgs) -> Result<()> {
    let criteria = load_criteria(&args.criteria)?;
    let rules = criteria.criteria().len();
    println!("criteria {}: {} diseases, {rules} criteria", criteria.version(), criteria.diseases().len());
    if let Some(path) = &args.notes {
        let notes = load_notes(path)?;
        let report = validate_corpus(&notes, &criteria);
        for issue in &report.issues {
            print_json(issue);
        }
        if !report.is_valid() {
            return Err(CliError::invalid(format!("{} of {} notes have problems", report.issues.len(), notes.len())));
        }
        println!("notes: {} valid", notes.len());
    }
    Ok(())
}

pub fn annotate(args: &AnnotateArgs) -> Result<()> {
    let criteria = load_criteria(&args.criteria)?;
    let notes = load_notes(&args.notes)?;
    let report = validate_corpus(&notes, &criteria);
    if !report.is_valid() {
        return Err(CliError::invalid(format!("notes file has {} problems; run criteria-validate", report.issues.len())));
    }
    let (client, cfg) = chat_client(&args.endpoint, args.endpoint.cache_dir.as_deref())?;
    let config = AnnotatorConfig { model_id: cfg.model_id.clone(), ..AnnotatorConfig::default() };

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, std::result::Result<AnnotatedNote, AnnotationError>)>> = Mutex::new(Vec::new());
    let dropped = AtomicUsize::new(0);
    let workers = args.endpoint.max_inflight.clamp(1, notes.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(note) = notes.get(i) else { break };
                let r = annotate_evidence(note, &criteria, client.as_ref(), &config).map(|o| {
                    dropped.fetch_add(o.dropped.len(), Ordering::Relaxed);
                    o.annotated
                });
                results.lock().expect("results lock").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(i, _)| *i);

    let mut annotated = Vec::new();
    let (mut malformed, mut transport) = (0usize, None);
    for (i, r) in results {
        match r {
            Ok(a) => annotated.push(a),
            Err(AnnotationError::Transport(e)) => {
                log::warn!("{}: {e}", notes[i].note_id);
                transport = Some(e);
            }
            Err(e) => {
                log::warn!("{}: {e}", notes[i].note_id);
                malformed += 1;
            }
        }
    }
    if annotated.is_empty() {
        return Err(match transport {
            Some(e) => e.into(),
            None => CliError::invalid("no note could be annotated"),
        });
    }
    save_annotations(&annotated, &args.out)?;
    write_snapshot(&args.out, "annotate", args, None)?;
    let complete = annotated.iter().filter(|a| a.completeness == Completeness::EvidenceComplete).count();
    print_json(&json!({
        "annotated": annotated.len(),
        "evidence_complete": complete,
        "failed": notes.len() - annotated.len(),
        "dropped_pairs": dropped.load(Ordering::Relaxed),
    }));
    if let Some(reference) = &args.reference {
        let human = load_annotations(reference, &notes, &criteria)?;
        print_json(&compute_iaa(&annotated, &human, &criteria)?);
    }
    if let Some(e) = transport {
        return Err(CliError::Partial(format!("{} notes failed; last endpoint error: {e}", notes.len() - annotated.len())));
    }
    if malformed > 0 {
        log::warn!("{malformed} notes were skipped after malformed annotator output");
    }
    Ok(())
}

fn load_annotated(notes: &Path, annotations: &Path, criteria: &CriteriaSet) -> Result<Vec<AnnotatedNote>> {
    let notes: Vec<NoteRecord> = load_notes(notes)?;
    Ok(load_annotations(annotations, &notes, criteria)?)
}

pub fn mask(args: &MaskArgs) -> Result<()> {
    let criteria = load_criteria(&args.criteria)?;
    let annotated = load_annotated(&args.notes, &args.annotations, &criteria)?;
    let mut masked = Vec::new();
    let mut skipped = 0usize;
    for note in annotated.iter().filter(|n| n.completeness == Completeness::EvidenceComplete) {
        // Same per-note seed as `balance`, so review item ids line up.
        match mask_evidence(note, &criteria, args.k, derived_seed(args.seed, note.note_id())) {
            Ok(m) => masked.push(m),
            Err(e @ (MaskError::KOutOfRange { .. } | MaskError::Infeasible { .. })) => {
                log::info!("{e}");
                skipped += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    if masked.is_empty() {
        return Err(CliError::invalid("no note could be masked"));
    }
    save_masked(&masked, &args.out)?;
    write_snapshot(&args.out, "mask", args, Some(args.seed))?;
    if let Some(path) = &args.review_items {
        let items: Vec<NewItem> = masked
            .iter()
            .map(|m| NewItem {
                item_id: m.masked_note_id.clone(),
                payload: ReviewPayload::MaskVerification { masked_note: m.clone() },
                assigned_reviewers: vec![],
            })
            .collect();
        jsonl::write_json(path, &items)?;
    }
    print_json(&json!({ "masked": masked.len(), "skipped": skipped }));
    Ok(())
}

pub fn balance(args: &BalanceArgs) -> Result<()> {
    let criteria = load_criteria(&args.criteria)?;
    let annotated = load_annotated(&args.notes, &args.annotations, &criteria)?;
    let complete: Vec<AnnotatedNote> =
        annotated.into_iter().filter(|n| n.completeness == Completeness::EvidenceComplete).collect();
    let decisions: ReviewDecisions = match &args.event_log {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::invalid(format!("event log {} does not exist", path.display())));
            }
            ReviewStore::open(path.clone())?.review_decisions()
        }
        None => HashMap::new(),
    };
    let outcome = build_balanced_corpus(&complete, &criteria, BalanceOptions { seed: args.seed, k: args.k }, &decisions)?;
    for w in &outcome.warnings {
        log::warn!("{}: {} ({} complete, {} masked)", w.disease_id, w.reason, w.complete, w.masked);
    }
    save_corpus(&outcome.entries, &args.out)?;
    write_snapshot(&args.out, "balance", args, Some(args.seed))?;
    let counts: Vec<_> = outcome
        .counts()
        .into_iter()
        .map(|(d, (c, m))| json!({ "disease_id": d, "complete": c, "masked": m }))
        .collect();
    print_json(&json!({ "entries": outcome.entries.len(), "per_disease": counts }));
    Ok(())
}

fn eligible_corpus(path: &Path, allow_unreviewed: bool) -> Result<Vec<CorpusEntry>> {
    let corpus = load_corpus(path)?;
    let total = corpus.len();
    let kept: Vec<CorpusEntry> = corpus.into_iter().filter(|e| e.eligible(allow_unreviewed)).collect();
    if kept.len() < total {
        log::warn!("{} of {total} entries are unreviewed or rejected and were left out", total - kept.len());
    }
    Ok(kept)
}

fn restrict_to_part(entries: Vec<CorpusEntry>, split: Option<&Path>, part: &str) -> Result<Vec<CorpusEntry>> {
    let Some(path) = split else { return Ok(entries) };
    let part = split_part(part)?;
    let manifest: DatasetSplit = jsonl::read_json(path)?;
    let keep: std::collections::HashSet<&str> = manifest.part(part).iter().map(String::as_str).collect();
    Ok(entries.into_iter().filter(|e| keep.contains(e.id())).collect())
}

pub fn split(args: &SplitArgs) -> Result<()> {
    let ratios: SplitRatios = args.ratios.parse()?;
    let entries = eligible_corpus(&args.corpus, args.allow_unreviewed)?;
    if entries.is_empty() {
        return Err(CliError::invalid("no eligible notes to split"));
    }
    let keys: Vec<SplitKey> = entries.iter().map(CorpusEntry::split_key).collect();
    let outcome = split_dataset(&keys, ratios, args.seed)?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    jsonl::write_json(&args.out, &outcome.split)?;
    write_snapshot(&args.out, "split", args, Some(args.seed))?;
    let [train, validation, test] = outcome.split.counts();
    print_json(&json!({ "train": train, "validation": validation, "test": test }));
    Ok(())
}

fn templates(dir: Option<&Path>) -> Result<TemplateSet> {
    Ok(match dir {
        Some(d) => TemplateSet::load_dir(d)?,
        None => TemplateSet::default(),
    })
}

pub fn taskgen(args: &TaskgenArgs) -> Result<()> {
    let criteria = load_criteria(&args.criteria)?;
    let subtasks = Subtask::parse_list(&args.subtasks)?;
    let set = templates(args.templates.as_deref())?;
    let entries = eligible_corpus(&args.corpus, args.allow_unreviewed)?;
    let entries = restrict_to_part(entries, args.split.as_deref(), &args.part)?;
    let demos = render_all(&entries, &subtasks, &set, &criteria)?;
    let n = export_training_file(&demos, &args.out)?;
    write_snapshot(&args.out, "taskgen", args, None)?;
    print_json(&json!({ "records": n, "notes": entries.len(), "templates": set.fingerprint() }));
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let cache_dir = args.endpoint.cache_dir.clone().unwrap_or_else(|| args.out_dir.join("cache"));
    let (client, endpoint) = chat_client(&args.endpoint, Some(&cache_dir))?;

    let mut config = RunConfig::new(&args.run_id, &args.corpus, &args.criteria, endpoint);
    config.split = args.split.clone();
    config.split_part = split_part(&args.part)?;
    config.templates = args.templates.clone();
    config.subtasks = Subtask::parse_list(&args.subtasks)?;
    config.matcher = MatcherConfig { threshold: args.matcher_threshold, use_embeddings: !args.no_embeddings };
    config.bootstrap = BootstrapConfig { iterations: args.bootstrap_iters, seed: args.seed, parallel: true };
    config.max_inflight = args.endpoint.max_inflight;
    config.allow_unreviewed = args.allow_unreviewed;
    config.temperature = args.temperature;
    config.max_tokens = args.max_tokens;

    let embedder: Option<Box<dyn Embedder>> = if args.no_embeddings {
        None
    } else if let Some(url) = &args.embed_endpoint {
        let cfg = EndpointConfig {
            url: url.clone(),
            api_key: std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
            model_id: config.endpoint.model_id.clone(),
        };
        let capability =
            if args.embed_token_level { EmbeddingCapability::TokenLevel } else { EmbeddingCapability::SentenceOnly };
        Some(Box::new(HttpEmbedder::new(cfg, capability, retry(&args.endpoint), limiter(args.endpoint.max_inflight)?)?))
    } else {
        Some(Box::new(StubEmbedder::new(STUB_EMBED_DIM, args.seed)?))
    };

    let outcome = run_evaluation(&config, client.as_ref(), embedder.as_deref(), &args.out_dir)?;
    for r in &outcome.reports {
        for m in &r.metrics {
            println!(
                "{}\t{}\t{:.4}\t[{:.4}, {:.4}]\tn={}",
                r.subtask.code(),
                m.name,
                m.mean,
                m.ci_low,
                m.ci_high,
                m.n
            );
        }
    }
    print_json(&json!({
        "run_dir": outcome.run_dir,
        "planned": outcome.planned,
        "failed": outcome.failed,
        "cache_hits": outcome.cache_hits,
    }));
    Ok(())
}

pub fn probe(args: &ProbeArgs) -> Result<()> {
    let (client, endpoint) = chat_client(&args.endpoint, args.endpoint.cache_dir.as_deref())?;
    let mut config = RunConfig::new("probe", &args.corpus, &args.criteria, endpoint);
    config.split = args.split.clone();
    config.split_part = split_part(&args.part)?;
    config.allow_unreviewed = args.allow_unreviewed;
    let (criteria, entries) = load_eval_set(&config)?;
    let bootstrap = BootstrapConfig { iterations: args.bootstrap_iters, seed: args.seed, parallel: true };
    let outcome = run_probe(
        &entries,
        &criteria,
        client.as_ref(),
        &config.endpoint.model_id,
        args.endpoint.max_inflight,
        bootstrap,
    )?;
    jsonl::write_records(&args.out, &outcome.verdicts)?;
    let mut summary = args.out.as_os_str().to_owned();
    summary.push(".summary");
    let summary_value = json!({
        "notes": outcome.verdicts.len(),
        "counts": outcome.counts,
        "accuracy_eu": outcome.accuracy_eu,
        "f1_eu": outcome.f1_eu,
    });
    jsonl::write_json(Path::new(&summary), &summary_value)?;
    write_snapshot(&args.out, "probe", args, Some(args.seed))?;
    print_json(&summary_value);
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum Ablation {
    Size,
    Diversity,
}

pub fn ablate(args: &AblateArgs, kind: Ablation) -> Result<()> {
    let entries = eligible_corpus(&args.corpus, args.allow_unreviewed)?;
    let train = restrict_to_part(entries, args.split.as_deref(), &args.part)?;
    if train.is_empty() {
        return Err(CliError::invalid("no training notes"));
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let (name, command) = match kind {
        Ablation::Size => ("size", "ablate-size"),
        Ablation::Diversity => ("diversity", "ablate-diversity"),
    };
    for &f in &args.fractions {
        let out = match kind {
            Ablation::Size => subsample_by_size(&train, f, args.seed)?,
            Ablation::Diversity => reduce_diversity(&train, f, args.seed)?,
        };
        let path = args.out_dir.join(format!("{name}-{f}.corpus"));
        save_corpus(&out, &path)?;
        print_json(&json!({ "fraction": f, "path": path, "entries": out.len() }));
    }
    write_snapshot(&args.out_dir.join(name), command, args, Some(args.seed))?;
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let format: ReportFormat = args.format.parse()?;
    let mut all = Vec::new();
    for input in &args.inputs {
        let path = if input.is_dir() { input.join("metrics.report") } else { input.clone() };
        all.extend(load_reports(&path)?);
    }
    let rows = emit_report(&all, &args.out, format)?;
    write_snapshot(&args.out, "report", args, None)?;
    print_json(&json!({ "rows": rows, "out": args.out }));
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let addr: std::net::SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::invalid(format!("bad listen address: {e}")))?;
    let state = ServiceState {
        store: ReviewStore::open(args.event_log.clone())?,
        reviewers: ReviewerRegistry::load(&args.reviewers_file)?,
        blind: !args.unblinded,
    };
    log::info!("replayed {} review items from {}", state.store.state().len(), args.event_log.display());
    serve_blocking(addr, Arc::new(state), |bound| {
        println!("listening on {bound}");
        let _ = std::io::stdout().flush();
    })?;
    Ok(())
}
