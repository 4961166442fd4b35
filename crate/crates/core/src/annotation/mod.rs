//! Criteria-grounded evidence annotation.

mod agents;
mod align;
mod iaa;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use agents::{annotate_evidence, AnnotationOutcome, AnnotatorConfig, DropReason, DroppedPair};
pub use align::{align_quote, char_slice};
pub use iaa::{compute_iaa, AgreementReport};

use crate::data::{Completeness, CriteriaSet, NoteRecord};
use crate::gateway::GatewayError;
use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("note {note_id}: diagnosis {diagnosis} is not in the criteria set")]
    UnknownDiagnosis { note_id: String, diagnosis: String },
    #[error("annotation aborted: {0}")]
    Transport(#[from] GatewayError),
    #[error("{role} returned malformed output twice: {detail}")]
    MalformedAgentOutput { role: &'static str, detail: String },
    #[error("invalid span for {criterion_id}: {detail}")]
    InvalidSpan { criterion_id: String, detail: String },
    #[error("annotation sets share no note ids")]
    DisjointNotes,
    #[error("annotation record {0} has no matching note")]
    MissingNote(String),
    #[error(transparent)]
    File(#[from] JsonlError),
}

/// A verbatim note substring bound to one criterion; offsets are chars.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvidenceSpan {
    pub criterion_id: String,
    pub start: usize,
    pub end: usize,
    pub quote: String,
}

impl EvidenceSpan {
    /// Checks the offsets against `text` and that the quote is what they cover.
    pub fn validate(&self, text: &str) -> Result<(), AnnotationError> {
        let bad = |detail: String| AnnotationError::InvalidSpan {
            criterion_id: self.criterion_id.clone(),
            detail,
        };
        if self.start >= self.end {
            return Err(bad(format!("empty range {}..{}", self.start, self.end)));
        }
        match char_slice(text, self.start, self.end) {
            Some(s) if s == self.quote => Ok(()),
            Some(s) => Err(bad(format!("quote {:?} but text has {s:?}", self.quote))),
            None => Err(bad(format!("range {}..{} is outside the note", self.start, self.end))),
        }
    }

    pub fn overlaps(&self, other: &EvidenceSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedNote {
    pub note: NoteRecord,
    pub spans: Vec<EvidenceSpan>,
    pub completeness: Completeness,
    pub satisfied_criteria: BTreeSet<String>,
}

impl AnnotatedNote {
    /// Sorts spans, checks them against the note and derives completeness.
    pub fn from_spans(
        note: NoteRecord,
        mut spans: Vec<EvidenceSpan>,
        criteria: &CriteriaSet,
    ) -> Result<Self, AnnotationError> {
        if criteria.disease(&note.primary_diagnosis).is_none() {
            return Err(AnnotationError::UnknownDiagnosis {
                note_id: note.note_id.clone(),
                diagnosis: note.primary_diagnosis.clone(),
            });
        }
        spans.sort_by_key(|a| (a.start, a.end));
        for s in &spans {
            s.validate(&note.text)?;
        }
        if let Some(w) = spans.windows(2).find(|w| w[0].overlaps(&w[1])) {
            return Err(AnnotationError::InvalidSpan {
                criterion_id: w[1].criterion_id.clone(),
                detail: format!("overlaps span of {}", w[0].criterion_id),
            });
        }
        let satisfied: BTreeSet<String> = spans.iter().map(|s| s.criterion_id.clone()).collect();
        let completeness = if criteria.is_sufficient(&note.primary_diagnosis, &satisfied) {
            Completeness::EvidenceComplete
        } else {
            Completeness::EvidenceIncomplete
        };
        Ok(Self {
            note,
            spans,
            completeness,
            satisfied_criteria: satisfied,
        })
    }

    pub fn note_id(&self) -> &str {
        &self.note.note_id
    }

    pub fn record(&self) -> AnnotationRecord {
        AnnotationRecord {
            note_id: self.note.note_id.clone(),
            completeness: self.completeness,
            spans: self.spans.clone(),
            satisfied_criteria: self.satisfied_criteria.clone(),
        }
    }
}

/// On-disk annotation: `{note_id, completeness, spans[], satisfied_criteria[]}`.
/// The note body lives in the notes file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub note_id: String,
    pub completeness: Completeness,
    pub spans: Vec<EvidenceSpan>,
    pub satisfied_criteria: BTreeSet<String>,
}

pub fn save_annotations(notes: &[AnnotatedNote], path: &Path) -> Result<usize, AnnotationError> {
    let records: Vec<AnnotationRecord> = notes.iter().map(AnnotatedNote::record).collect();
    Ok(jsonl::write_records(path, &records)?)
}

/// Joins an annotation file with its notes and re-validates every record.
pub fn load_annotations(
    path: &Path,
    notes: &[NoteRecord],
    criteria: &CriteriaSet,
) -> Result<Vec<AnnotatedNote>, AnnotationError> {
    let by_id: HashMap<&str, &NoteRecord> = notes.iter().map(|n| (n.note_id.as_str(), n)).collect();
    let records: Vec<AnnotationRecord> = jsonl::read_records(path)?;
    records
        .into_iter()
        .map(|r| {
            let note = by_id
                .get(r.note_id.as_str())
                .ok_or_else(|| AnnotationError::MissingNote(r.note_id.clone()))?;
            AnnotatedNote::from_spans((*note).clone(), r.spans, criteria)
        })
        .collect()
}
