//! Evidence-incomplete notes by masking, and the balanced benchmark corpus.

mod balance;
mod mask;
mod sentences;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use balance::{build_balanced_corpus, BalanceOptions, BalanceOutcome, ReviewDecisions};
pub use mask::{mask_evidence, uncertainty_explanation, MASK_ATTEMPTS};
pub use sentences::sentence_segments;

use crate::annotation::{AnnotatedNote, EvidenceSpan};
use crate::data::{Completeness, SplitKey};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyLabel {
    SufficientEvidence,
    InsufficientEvidence,
}

impl From<Completeness> for UncertaintyLabel {
    fn from(c: Completeness) -> Self {
        match c {
            Completeness::EvidenceComplete => UncertaintyLabel::SufficientEvidence,
            Completeness::EvidenceIncomplete => UncertaintyLabel::InsufficientEvidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    #[default]
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("note {0} is not evidence-complete")]
    NotComplete(String),
    #[error("k = {k} is out of range 1..={max} for note {note_id}")]
    KOutOfRange { note_id: String, k: usize, max: usize },
    #[error("no valid selection of {k} criteria to mask in note {note_id}")]
    Infeasible { note_id: String, k: usize },
    #[error("criterion {0} is not in the criteria set")]
    UnknownCriterion(String),
    #[error("masked note {id} violates an invariant: {detail}")]
    Invariant { id: String, detail: String },
    #[error(transparent)]
    File(#[from] JsonlError),
}

/// An evidence-incomplete derivative of an annotated note.
///
/// `spans` are the surviving evidence spans with offsets into the masked
/// text. `uncertainty_explanation[i]` explains the i-th entry of
/// `masked_criteria` in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedNote {
    pub masked_note_id: String,
    pub base_note_id: String,
    pub primary_diagnosis: String,
    pub text: String,
    pub masked_criteria: BTreeSet<String>,
    pub uncertainty_label: UncertaintyLabel,
    pub uncertainty_explanation: Vec<String>,
    pub review_status: ReviewStatus,
    pub spans: Vec<EvidenceSpan>,
}

impl MaskedNote {
    /// Checks the structural invariants that do not need the base note.
    pub fn validate(&self) -> Result<(), MaskError> {
        let bad = |detail: &str| MaskError::Invariant {
            id: self.masked_note_id.clone(),
            detail: detail.to_string(),
        };
        if self.masked_criteria.is_empty() {
            return Err(bad("no masked criteria"));
        }
        if self.uncertainty_label != UncertaintyLabel::InsufficientEvidence {
            return Err(bad("label must be insufficient_evidence"));
        }
        if self.uncertainty_explanation.len() != self.masked_criteria.len() {
            return Err(bad("one explanation per masked criterion"));
        }
        if self.spans.is_empty() {
            return Err(bad("no surviving evidence"));
        }
        for s in &self.spans {
            s.validate(&self.text).map_err(|e| bad(&e.to_string()))?;
        }
        Ok(())
    }
}

/// One note of the benchmark corpus, complete or masked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusEntry {
    Complete(AnnotatedNote),
    Masked(MaskedNote),
}

impl CorpusEntry {
    pub fn id(&self) -> &str {
        match self {
            CorpusEntry::Complete(a) => &a.note.note_id,
            CorpusEntry::Masked(m) => &m.masked_note_id,
        }
    }

    pub fn disease_id(&self) -> &str {
        match self {
            CorpusEntry::Complete(a) => &a.note.primary_diagnosis,
            CorpusEntry::Masked(m) => &m.primary_diagnosis,
        }
    }

    pub fn completeness(&self) -> Completeness {
        match self {
            CorpusEntry::Complete(a) => a.completeness,
            CorpusEntry::Masked(_) => Completeness::EvidenceIncomplete,
        }
    }

    pub fn text(&self) -> &str {
        match self {
            CorpusEntry::Complete(a) => &a.note.text,
            CorpusEntry::Masked(m) => &m.text,
        }
    }

    pub fn spans(&self) -> &[EvidenceSpan] {
        match self {
            CorpusEntry::Complete(a) => &a.spans,
            CorpusEntry::Masked(m) => &m.spans,
        }
    }

    pub fn uncertainty_label(&self) -> UncertaintyLabel {
        self.completeness().into()
    }

    pub fn uncertainty_explanations(&self) -> &[String] {
        match self {
            CorpusEntry::Complete(_) => &[],
            CorpusEntry::Masked(m) => &m.uncertainty_explanation,
        }
    }

    pub fn split_key(&self) -> SplitKey {
        SplitKey {
            note_id: self.id().to_string(),
            disease_id: self.disease_id().to_string(),
            completeness: self.completeness(),
        }
    }

    /// Complete notes always qualify; masked notes need expert approval
    /// unless unreviewed notes are explicitly allowed. Rejected notes never do.
    pub fn eligible(&self, allow_unreviewed: bool) -> bool {
        match self {
            CorpusEntry::Complete(_) => true,
            CorpusEntry::Masked(m) => match m.review_status {
                ReviewStatus::Approved => true,
                ReviewStatus::Pending => allow_unreviewed,
                ReviewStatus::Rejected => false,
            },
        }
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>, MaskError> {
    Ok(jsonl::read_records(path)?)
}

pub fn save_corpus(entries: &[CorpusEntry], path: &Path) -> Result<usize, MaskError> {
    Ok(jsonl::write_records(path, entries)?)
}

pub fn load_masked(path: &Path) -> Result<Vec<MaskedNote>, MaskError> {
    Ok(jsonl::read_records(path)?)
}

pub fn save_masked(notes: &[MaskedNote], path: &Path) -> Result<usize, MaskError> {
    Ok(jsonl::write_records(path, notes)?)
}
