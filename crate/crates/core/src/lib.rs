//! Uncertainty-aware diagnosis benchmarks: build them from clinical notes and
//! diagnostic criteria, query model endpoints on the four diagnostic
//! subtasks, score the answers with bootstrap confidence intervals, and keep
//! an auditable record of expert review.
//!
//! Module map:
//!
//! - [`data`]: criteria, notes, corpus validation, stratified splits
//! - [`annotation`]: extractor/verifier evidence annotation, quote alignment, agreement
//! - [`uncertainty`]: evidence masking and 1:1 balanced corpora
//! - [`taskgen`]: subtask prompts, training files, answer parsing
//! - [`gateway`]: chat and embedding clients, cache, retries, offline stubs
//! - [`metrics`]: accuracy, uncertainty recognition, explanation scores, bootstrap
//! - [`experiments`]: evaluation runs, sufficiency probe, ablation corpora, reports
//! - [`review`]: event-sourced expert review store and its HTTP service

pub mod annotation;
pub mod data;
pub mod experiments;
pub mod gateway;
pub mod jsonl;
pub mod metrics;
pub mod review;
pub mod rng;
pub mod synth;
pub mod taskgen;
pub mod uncertainty;

pub use annotation::{AnnotatedNote, EvidenceSpan};
pub use data::{Completeness, CriteriaSet, Criterion, DatasetSplit, NoteRecord};
pub use experiments::RunConfig;
pub use metrics::MetricValue;
pub use taskgen::{Demonstration, ParsedPrediction, Subtask};
pub use uncertainty::{CorpusEntry, MaskedNote};
