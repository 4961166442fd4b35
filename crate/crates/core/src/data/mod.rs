//! Criteria registry, note records, corpus validation and dataset splits.

mod criteria;
mod notes;
mod split;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use criteria::{
    load_criteria, save_criteria, CriteriaSet, Criterion, CriterionCategory, Disease, Requirement,
    Specialty,
};
pub use notes::{
    load_notes, save_notes, validate_corpus, CorpusIssue, NoteRecord, NoteSource, ValidationReport,
};
pub use split::{
    apportion, split_dataset, DatasetSplit, SplitKey, SplitOutcome, SplitPart, SplitRatios, SplitWarning,
    MIN_STRATUM,
};

use crate::jsonl::JsonlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completeness {
    EvidenceComplete,
    EvidenceIncomplete,
}

impl fmt::Display for Completeness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Completeness::EvidenceComplete => "evidence_complete",
            Completeness::EvidenceIncomplete => "evidence_incomplete",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("schema violation in field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("disease {disease_id} has {count} criteria; diseases with fewer than two rules are excluded")]
    TooFewRules { disease_id: String, count: usize },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("invalid split ratios {0}")]
    InvalidRatios(String),
    #[error(transparent)]
    File(#[from] JsonlError),
}

impl DataError {
    pub(crate) fn schema(field: &str, message: impl Into<String>) -> Self {
        DataError::Schema {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
