//! Subtask prompts and demonstrations, training-file export, and parsing of
//! raw model answers.

mod parse;
mod templates;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use parse::parse_prediction;
pub use templates::{TemplateSet, NOTE_PLACEHOLDER};

use crate::data::CriteriaSet;
use crate::jsonl::{self, JsonlError};
use crate::uncertainty::{CorpusEntry, UncertaintyLabel};

pub const SUFFICIENT_OUTPUT: &str = "Sufficient information (Confident diagnosis)";
pub const INSUFFICIENT_OUTPUT: &str = "Insufficient information (Diagnostic uncertainty)";
pub const NO_UNCERTAINTY_OUTPUT: &str = "None";
pub const EXPLANATION_PREFIX: &str = "The below evidence support the diagnosis";

#[derive(Debug, thiserror::Error)]
pub enum TaskgenError {
    #[error("no template for subtask {0}")]
    MissingTemplate(Subtask),
    #[error("template for {0} lacks the {{{{note}}}} placeholder")]
    NoPlaceholder(Subtask),
    #[error("unknown subtask {0:?}; expected one of DD, DE, UR, UE")]
    UnknownSubtask(String),
    #[error("no demonstrations to export")]
    Empty,
    #[error("template {path}: {source}")]
    Template { path: String, source: std::io::Error },
    #[error(transparent)]
    File(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtask {
    DiseaseDiagnosis,
    DiagnosticExplanation,
    UncertaintyRecognition,
    UncertaintyExplanation,
}

impl Subtask {
    pub const ALL: [Subtask; 4] = [
        Subtask::DiseaseDiagnosis,
        Subtask::DiagnosticExplanation,
        Subtask::UncertaintyRecognition,
        Subtask::UncertaintyExplanation,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Subtask::DiseaseDiagnosis => "DD",
            Subtask::DiagnosticExplanation => "DE",
            Subtask::UncertaintyRecognition => "UR",
            Subtask::UncertaintyExplanation => "UE",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Subtask::DiseaseDiagnosis => "disease_diagnosis",
            Subtask::DiagnosticExplanation => "diagnostic_explanation",
            Subtask::UncertaintyRecognition => "uncertainty_recognition",
            Subtask::UncertaintyExplanation => "uncertainty_explanation",
        }
    }

    /// Parses a comma-separated list such as `DD,UR`.
    pub fn parse_list(s: &str) -> Result<Vec<Subtask>, TaskgenError> {
        let mut out: Vec<Subtask> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let t: Subtask = part.parse()?;
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out.sort();
        Ok(out)
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Subtask {
    type Err = TaskgenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subtask::ALL
            .into_iter()
            .find(|t| t.code().eq_ignore_ascii_case(s) || t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| TaskgenError::UnknownSubtask(s.to_string()))
    }
}

/// Structured ground truth for one corpus note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub note_id: String,
    pub diagnosis: String,
    pub explanations: Vec<String>,
    pub uncertainty_label: UncertaintyLabel,
    pub uncertainty_explanations: Vec<String>,
}

impl GroundTruth {
    /// The diagnosis string is the disease display name when the criteria
    /// set knows the disease, else its id.
    pub fn from_entry(entry: &CorpusEntry, criteria: &CriteriaSet) -> Self {
        let diagnosis = criteria
            .disease(entry.disease_id())
            .map_or_else(|| entry.disease_id().to_string(), |d| d.display_name.clone());
        Self {
            note_id: entry.id().to_string(),
            diagnosis,
            explanations: entry.spans().iter().map(|s| s.quote.clone()).collect(),
            uncertainty_label: entry.uncertainty_label(),
            uncertainty_explanations: entry.uncertainty_explanations().to_vec(),
        }
    }

    pub fn is_uncertain(&self) -> bool {
        self.uncertainty_label == UncertaintyLabel::InsufficientEvidence
    }

    /// The ground-truth answer string for `subtask`.
    pub fn answer(&self, subtask: Subtask) -> String {
        match subtask {
            Subtask::DiseaseDiagnosis => self.diagnosis.clone(),
            Subtask::DiagnosticExplanation => {
                let quoted: Vec<String> = self
                    .explanations
                    .iter()
                    .map(|q| serde_json::to_string(q).expect("strings serialize"))
                    .collect();
                format!("{EXPLANATION_PREFIX} {{{}}}", quoted.join(", "))
            }
            Subtask::UncertaintyRecognition => match self.uncertainty_label {
                UncertaintyLabel::SufficientEvidence => SUFFICIENT_OUTPUT.to_string(),
                UncertaintyLabel::InsufficientEvidence => INSUFFICIENT_OUTPUT.to_string(),
            },
            Subtask::UncertaintyExplanation => {
                if self.uncertainty_explanations.is_empty() {
                    NO_UNCERTAINTY_OUTPUT.to_string()
                } else {
                    self.uncertainty_explanations.join("\n")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub note_id: String,
    pub subtask: Subtask,
    pub instruction: String,
    pub input: String,
    pub output: String,
}

pub fn render_demonstration(
    entry: &CorpusEntry,
    subtask: Subtask,
    templates: &TemplateSet,
    criteria: &CriteriaSet,
) -> Result<Demonstration, TaskgenError> {
    Ok(Demonstration {
        note_id: entry.id().to_string(),
        subtask,
        instruction: templates.instruction(subtask)?,
        input: entry.text().to_string(),
        output: GroundTruth::from_entry(entry, criteria).answer(subtask),
    })
}

/// One demonstration per (entry, subtask), entries in input order.
pub fn render_all(
    entries: &[CorpusEntry],
    subtasks: &[Subtask],
    templates: &TemplateSet,
    criteria: &CriteriaSet,
) -> Result<Vec<Demonstration>, TaskgenError> {
    let mut out = Vec::with_capacity(entries.len() * subtasks.len());
    for e in entries {
        for &t in subtasks {
            out.push(render_demonstration(e, t, templates, criteria)?);
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TrainingRecord<'a> {
    instruction: &'a str,
    input: &'a str,
    output: &'a str,
    subtask: Subtask,
    note_id: &'a str,
}

pub fn export_training_file(demos: &[Demonstration], path: &Path) -> Result<usize, TaskgenError> {
    if demos.is_empty() {
        return Err(TaskgenError::Empty);
    }
    let records: Vec<TrainingRecord> = demos
        .iter()
        .map(|d| TrainingRecord {
            instruction: &d.instruction,
            input: &d.input,
            output: &d.output,
            subtask: d.subtask,
            note_id: &d.note_id,
        })
        .collect();
    Ok(jsonl::write_records(path, &records)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrediction {
    pub note_id: String,
    pub subtask: Subtask,
    pub diagnosis: Option<String>,
    pub explanations: Option<Vec<String>>,
    pub uncertainty_label: Option<UncertaintyLabel>,
    pub uncertainty_explanations: Option<Vec<String>>,
    pub parse_ok: bool,
    pub raw: String,
}

impl ParsedPrediction {
    pub fn failed(note_id: &str, subtask: Subtask, raw: &str) -> Self {
        Self {
            note_id: note_id.to_string(),
            subtask,
            diagnosis: None,
            explanations: None,
            uncertainty_label: None,
            uncertainty_explanations: None,
            parse_ok: false,
            raw: raw.to_string(),
        }
    }

    /// Whether the parsed fields equal the ground truth for this subtask.
    pub fn matches(&self, truth: &GroundTruth) -> bool {
        match self.subtask {
            Subtask::DiseaseDiagnosis => self.diagnosis.as_deref() == Some(truth.diagnosis.as_str()),
            Subtask::DiagnosticExplanation => self.explanations.as_ref() == Some(&truth.explanations),
            Subtask::UncertaintyRecognition => self.uncertainty_label == Some(truth.uncertainty_label),
            Subtask::UncertaintyExplanation => {
                self.uncertainty_explanations.as_ref() == Some(&truth.uncertainty_explanations)
            }
        }
    }
}

/// Prediction file line: `{note_id, subtask, raw, parsed}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub note_id: String,
    pub subtask: Subtask,
    pub raw: String,
    pub parsed: ParsedPrediction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

impl PredictionRecord {
    pub fn from_raw(note_id: &str, subtask: Subtask, raw: &str) -> Self {
        Self {
            note_id: note_id.to_string(),
            subtask,
            raw: raw.to_string(),
            parsed: parse_prediction(note_id, raw, subtask),
            transport_error: None,
        }
    }

    pub fn transport_failure(note_id: &str, subtask: Subtask, error: &str) -> Self {
        Self {
            note_id: note_id.to_string(),
            subtask,
            raw: String::new(),
            parsed: ParsedPrediction::failed(note_id, subtask, ""),
            transport_error: Some(error.to_string()),
        }
    }
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, TaskgenError> {
    Ok(jsonl::read_records(path)?)
}

pub fn save_predictions(records: &[PredictionRecord], path: &Path) -> Result<usize, TaskgenError> {
    Ok(jsonl::write_records(path, records)?)
}
