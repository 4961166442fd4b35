//! Shared helpers for the binary-level tests.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use uadx::annotation::save_annotations;
use uadx::data::{load_criteria, save_criteria, save_notes};
use uadx::synth::{SynthConfig, SyntheticCorpus};
use uadx::taskgen::{GroundTruth, Subtask, TemplateSet};
use uadx::uncertainty::load_corpus;

pub fn uadx() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uadx"));
    for var in ["UADX_ENDPOINT", "UADX_API_KEY", "UADX_MODEL", "UADX_EMBED_ENDPOINT", "RUST_LOG"] {
        cmd.env_remove(var);
    }
    cmd
}

/// Runs `uadx` with `args`; panics with its stderr when the exit code differs.
pub fn run_expect(args: &[&str], code: i32) -> Output {
    let out = uadx().args(args).output().expect("spawn uadx");
    assert_eq!(
        out.status.code(),
        Some(code),
        "uadx {args:?}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Notes, criteria and gold annotations of a synthetic corpus on disk.
pub struct Inputs {
    pub dir: tempfile::TempDir,
    pub notes: PathBuf,
    pub criteria: PathBuf,
    pub annotations: PathBuf,
    pub synth: SyntheticCorpus,
}

impl Inputs {
    pub fn new(diseases: usize, notes_per_disease: usize, seed: u64) -> Self {
        let synth = SyntheticCorpus::generate(&SynthConfig { diseases, notes_per_disease, seed, ..Default::default() });
        let dir = tempfile::tempdir().unwrap();
        let notes = dir.path().join("notes.records");
        let criteria = dir.path().join("criteria.records");
        let annotations = dir.path().join("annotations.records");
        save_notes(&synth.notes, &notes).unwrap();
        save_criteria(&synth.criteria, &criteria).unwrap();
        save_annotations(&synth.annotated, &annotations).unwrap();
        Self { dir, notes, criteria, annotations, synth }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Runs `uadx balance` and returns the corpus path.
    pub fn balance(&self, seed: u64) -> PathBuf {
        let out = self.path("corpus.records");
        run_expect(
            &[
                "balance",
                "--notes", s(&self.notes),
                "--annotations", s(&self.annotations),
                "--criteria", s(&self.criteria),
                "--seed", &seed.to_string(),
                "--out", s(&out),
            ],
            0,
        );
        out
    }
}

/// Prompt → ground-truth answer for every note and subtask of a corpus file.
pub fn oracle_answers(corpus: &Path, criteria: &Path) -> HashMap<String, String> {
    let criteria = load_criteria(criteria).unwrap();
    let templates = TemplateSet::default();
    let mut answers = HashMap::new();
    for e in load_corpus(corpus).unwrap() {
        let truth = GroundTruth::from_entry(&e, &criteria);
        for t in Subtask::ALL {
            answers.insert(templates.render_prompt(t, e.text()).unwrap(), truth.answer(t));
        }
    }
    answers
}

/// A chat-completions endpoint that answers every known prompt correctly.
pub struct Oracle {
    pub url: String,
    pub calls: Arc<AtomicUsize>,
}

struct OracleState {
    answers: HashMap<String, String>,
    calls: Arc<AtomicUsize>,
}

async fn complete(State(st): State<Arc<OracleState>>, Json(body): Json<Value>) -> Json<Value> {
    st.calls.fetch_add(1, Ordering::SeqCst);
    let prompt = body["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str()).unwrap_or("");
    let answer = st.answers.get(prompt).cloned().unwrap_or_else(|| "unknown prompt".into());
    Json(json!({
        "choices": [{ "message": { "role": "assistant", "content": answer } }],
        "usage": { "prompt_tokens": 1, "completion_tokens": 1 }
    }))
}

impl Oracle {
    pub fn start(answers: HashMap<String, String>) -> Self {
        let calls = Arc::new(AtomicUsize::new(0));
        let state = Arc::new(OracleState { answers, calls: calls.clone() });
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                let app = Router::new().route("/v1/chat/completions", post(complete)).with_state(state);
                axum::serve(listener, app).await.unwrap();
            });
        });
        let addr = rx.recv().unwrap();
        Self { url: format!("http://{addr}/v1/chat/completions"), calls }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}
