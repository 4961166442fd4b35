use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CriteriaSet, DataError};
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteSource {
    Synthetic,
    UserCorpus,
}

/// A clinical note with exactly one primary diagnosis.
///
/// `word_count` is derived from `text` and is not part of the on-disk record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "NoteWire")]
pub struct NoteRecord {
    pub note_id: String,
    pub text: String,
    pub primary_diagnosis: String,
    pub source: NoteSource,
    #[serde(skip_serializing)]
    word_count: usize,
}

#[derive(Deserialize)]
struct NoteWire {
    note_id: String,
    text: String,
    primary_diagnosis: String,
    source: NoteSource,
}

impl From<NoteWire> for NoteRecord {
    fn from(w: NoteWire) -> Self {
        NoteRecord::new(w.note_id, w.text, w.primary_diagnosis, w.source)
    }
}

impl NoteRecord {
    pub fn new(
        note_id: impl Into<String>,
        text: impl Into<String>,
        primary_diagnosis: impl Into<String>,
        source: NoteSource,
    ) -> Self {
        let text = text.into();
        Self {
            note_id: note_id.into(),
            word_count: text.split_whitespace().count(),
            text,
            primary_diagnosis: primary_diagnosis.into(),
            source,
        }
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }
}

pub fn load_notes(path: &Path) -> Result<Vec<NoteRecord>, DataError> {
    Ok(jsonl::read_records(path)?)
}

pub fn save_notes(notes: &[NoteRecord], path: &Path) -> Result<usize, DataError> {
    Ok(jsonl::write_records(path, notes)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum CorpusIssue {
    UnresolvedDiagnosis { note_id: String, diagnosis: String },
    EmptyText { note_id: String },
    DuplicateId { note_id: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<CorpusIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Lists every note that cannot take part in a benchmark build.
///
/// A duplicated id is reported once, however many times it repeats.
pub fn validate_corpus(notes: &[NoteRecord], criteria: &CriteriaSet) -> ValidationReport {
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for n in notes {
        if !seen.insert(n.note_id.as_str()) && reported.insert(n.note_id.as_str()) {
            issues.push(CorpusIssue::DuplicateId {
                note_id: n.note_id.clone(),
            });
        }
        if n.text.trim().is_empty() {
            issues.push(CorpusIssue::EmptyText {
                note_id: n.note_id.clone(),
            });
        }
        if criteria.disease(&n.primary_diagnosis).is_none() {
            issues.push(CorpusIssue::UnresolvedDiagnosis {
                note_id: n.note_id.clone(),
                diagnosis: n.primary_diagnosis.clone(),
            });
        }
    }
    ValidationReport { issues }
}
