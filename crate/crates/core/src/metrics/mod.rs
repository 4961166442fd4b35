//! Evaluation metrics and bootstrap confidence intervals.
//!
//! Recognition metrics treat "uncertain" as the positive class. An answer
//! that could not be parsed is always wrong: a false negative on an
//! uncertain note, a false positive on a confident one.

mod bootstrap;
mod embedding;
mod explain;
mod meteor;
mod report;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_ci, percentile, stable_mean, BootstrapConfig, MAX_REDRAWS};
pub use embedding::{bertscore_greedy, sentence_similarity};
pub use explain::{
    greedy_match, interpret_accuracy, interpret_accuracy_eu, soft_f1_explanations, token_overlap_f1,
    ExplanationMatch, Matcher, MatcherConfig, SoftF1,
};
pub use meteor::{meteor, Meteor, MeteorScore, SynonymLexicon};
pub use report::{evaluate_subtask, load_reports, save_reports, EvalContext, MetricReport};

use crate::gateway::GatewayError;
use crate::jsonl::JsonlError;
use crate::taskgen::{GroundTruth, ParsedPrediction};
use crate::uncertainty::UncertaintyLabel;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("predictions and references differ in length ({preds} vs {refs})")]
    LengthMismatch { preds: usize, refs: usize },
    #[error("row {index}: prediction for {pred} but reference for {reference}")]
    IdMismatch { index: usize, pred: String, reference: String },
    #[error("{0} is undefined on this sample")]
    Undefined(&'static str),
    #[error("bootstrap needs at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("{metric}: bootstrap iteration {iteration} stayed undefined after {MAX_REDRAWS} redraws")]
    BootstrapExhausted { metric: String, iteration: usize },
    #[error("threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("{0}")]
    Capability(String),
    #[error("both texts are empty")]
    EmptyInput,
    #[error("embedding failed: {0}")]
    Embedding(#[from] GatewayError),
    #[error(transparent)]
    File(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    /// Mean of the bootstrap iterates.
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub iterations: usize,
    /// The metric on the full sample.
    pub estimate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn tally<'a>(pairs: impl IntoIterator<Item = Pair<'a>>) -> Self {
        let mut c = Self::default();
        for (p, r) in pairs {
            c.add(r.is_uncertain(), p.uncertainty_label);
        }
        c
    }

    pub fn add(&mut self, truth_uncertain: bool, predicted: Option<UncertaintyLabel>) {
        let flagged = predicted == Some(UncertaintyLabel::InsufficientEvidence);
        let cleared = predicted == Some(UncertaintyLabel::SufficientEvidence);
        match (truth_uncertain, flagged, cleared) {
            (true, true, _) => self.tp += 1,
            (true, false, _) => self.fn_ += 1,
            (false, _, true) => self.tn += 1,
            (false, _, false) => self.fp += 1,
        }
    }

    pub fn accuracy_eu(&self) -> Result<f64, MetricError> {
        let uncertain = self.tp + self.fn_;
        if uncertain == 0 {
            return Err(MetricError::Undefined("accuracy_eu"));
        }
        Ok(self.tp as f64 / uncertain as f64)
    }

    pub fn precision_recall(&self) -> PrecisionRecall {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        PrecisionRecall::new(ratio(self.tp, self.tp + self.fp), ratio(self.tp, self.tp + self.fn_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrecisionRecall {
    /// F1 is the harmonic mean, 0 when both parts are 0.
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

/// A prediction and the reference for the same note.
pub type Pair<'a> = (&'a ParsedPrediction, &'a GroundTruth);

/// Pairs predictions with references row by row; the note ids must agree.
pub fn align<'a>(preds: &'a [ParsedPrediction], refs: &'a [GroundTruth]) -> Result<Vec<Pair<'a>>, MetricError> {
    if preds.len() != refs.len() {
        return Err(MetricError::LengthMismatch { preds: preds.len(), refs: refs.len() });
    }
    preds
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(index, (p, r))| {
            if p.note_id == r.note_id {
                Ok((p, r))
            } else {
                Err(MetricError::IdMismatch {
                    index,
                    pred: p.note_id.clone(),
                    reference: r.note_id.clone(),
                })
            }
        })
        .collect()
}

/// Lowercase, trim, collapse whitespace, strip terminal punctuation.
pub fn normalize_diagnosis(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && !matches!(c, ')' | ']'))
        .trim_end()
        .to_string()
}

pub fn diagnosis_correct(pred: &ParsedPrediction, truth: &GroundTruth) -> bool {
    pred.diagnosis
        .as_deref()
        .is_some_and(|d| normalize_diagnosis(d) == normalize_diagnosis(&truth.diagnosis))
}

pub fn diagnostic_accuracy(preds: &[ParsedPrediction], refs: &[GroundTruth]) -> Result<f64, MetricError> {
    let pairs = align(preds, refs)?;
    if pairs.is_empty() {
        return Err(MetricError::Undefined("diagnostic_accuracy"));
    }
    let correct = pairs.iter().filter(|(p, r)| diagnosis_correct(p, r)).count();
    Ok(correct as f64 / pairs.len() as f64)
}

pub fn accuracy_eu(preds: &[ParsedPrediction], refs: &[GroundTruth]) -> Result<f64, MetricError> {
    ConfusionCounts::tally(align(preds, refs)?).accuracy_eu()
}

pub fn f1_eu(preds: &[ParsedPrediction], refs: &[GroundTruth]) -> Result<PrecisionRecall, MetricError> {
    Ok(ConfusionCounts::tally(align(preds, refs)?).precision_recall())
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::taskgen::{GroundTruth, ParsedPrediction, Subtask};
    use crate::uncertainty::UncertaintyLabel;

    pub fn truth(id: &str, uncertain: bool) -> GroundTruth {
        GroundTruth {
            note_id: id.into(),
            diagnosis: "Acute liver failure".into(),
            explanations: vec![],
            uncertainty_label: if uncertain {
                UncertaintyLabel::InsufficientEvidence
            } else {
                UncertaintyLabel::SufficientEvidence
            },
            uncertainty_explanations: vec![],
        }
    }

    pub fn ur(id: &str, label: Option<UncertaintyLabel>) -> ParsedPrediction {
        let mut p = ParsedPrediction::failed(id, Subtask::UncertaintyRecognition, "");
        p.uncertainty_label = label;
        p.parse_ok = label.is_some();
        p
    }

    pub fn dd(id: &str, diagnosis: Option<&str>) -> ParsedPrediction {
        let mut p = ParsedPrediction::failed(id, Subtask::DiseaseDiagnosis, "");
        p.diagnosis = diagnosis.map(str::to_string);
        p.parse_ok = diagnosis.is_some();
        p
    }
}
