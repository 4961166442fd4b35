//! Explanation matching: soft-F1 over lists and the interpretation
//! accuracies, which count matched ground-truth explanations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{align, sentence_similarity, MetricError, PrecisionRecall};
use crate::gateway::{tokenize, Embedder};
use crate::taskgen::{GroundTruth, ParsedPrediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMatch {
    pub pred_index: usize,
    pub ref_index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matches: Vec<ExplanationMatch>,
}

/// F1 of the token multisets; 1 when both sides are empty.
pub fn token_overlap_f1(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokenize(a), tokenize(b));
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tb {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in &ta {
        if let Some(c) = counts.get_mut(t.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            overlap += 1;
        }
    }
    PrecisionRecall::new(overlap as f64 / ta.len() as f64, overlap as f64 / tb.len() as f64).f1
}

/// Greedy one-to-one matching over descending similarity, keeping pairs at
/// or above `threshold`. Ties break on the texts before the positions, so
/// the number of matches does not depend on list order.
pub fn greedy_match<S: AsRef<str>>(
    pred: &[S],
    refs: &[S],
    sims: &[Vec<f64>],
    threshold: f64,
) -> Vec<ExplanationMatch> {
    let mut cands: Vec<ExplanationMatch> = Vec::new();
    for (i, row) in sims.iter().enumerate() {
        for (j, &s) in row.iter().enumerate() {
            if s >= threshold {
                cands.push(ExplanationMatch { pred_index: i, ref_index: j, similarity: s });
            }
        }
    }
    cands.sort_by(|x, y| {
        y.similarity
            .total_cmp(&x.similarity)
            .then_with(|| pred[x.pred_index].as_ref().cmp(pred[y.pred_index].as_ref()))
            .then_with(|| refs[x.ref_index].as_ref().cmp(refs[y.ref_index].as_ref()))
            .then_with(|| (x.pred_index, x.ref_index).cmp(&(y.pred_index, y.ref_index)))
    });
    let (mut used_p, mut used_r) = (vec![false; pred.len()], vec![false; refs.len()]);
    let mut out = Vec::new();
    for m in cands {
        if !used_p[m.pred_index] && !used_r[m.ref_index] {
            used_p[m.pred_index] = true;
            used_r[m.ref_index] = true;
            out.push(m);
        }
    }
    out
}

pub fn soft_f1_explanations<S: AsRef<str>>(
    pred: &[S],
    refs: &[S],
    sim: impl Fn(&str, &str) -> f64,
    threshold: f64,
) -> Result<SoftF1, MetricError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MetricError::InvalidThreshold(threshold));
    }
    if pred.is_empty() || refs.is_empty() {
        let f = if pred.is_empty() && refs.is_empty() { 1.0 } else { 0.0 };
        return Ok(SoftF1 { precision: f, recall: f, f1: f, matches: Vec::new() });
    }
    let sims: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| refs.iter().map(|r| sim(p.as_ref(), r.as_ref())).collect())
        .collect();
    let matches = greedy_match(pred, refs, &sims, threshold);
    let pr = PrecisionRecall::new(
        matches.len() as f64 / pred.len() as f64,
        matches.len() as f64 / refs.len() as f64,
    );
    Ok(SoftF1 { precision: pr.precision, recall: pr.recall, f1: pr.f1, matches })
}

/// What counts as a correct explanation; recorded with every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub threshold: f64,
    /// Also score pairs by embedding similarity when an embedder is present.
    pub use_embeddings: bool,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self { threshold: 0.7, use_embeddings: true }
    }
}

/// Pair similarity = max(token-overlap F1, sentence similarity).
#[derive(Clone, Copy)]
pub struct Matcher<'a> {
    config: MatcherConfig,
    embedder: Option<&'a dyn Embedder>,
}

impl<'a> Matcher<'a> {
    pub fn new(config: MatcherConfig, embedder: Option<&'a dyn Embedder>) -> Result<Self, MetricError> {
        if !(config.threshold > 0.0 && config.threshold <= 1.0) {
            return Err(MetricError::InvalidThreshold(config.threshold));
        }
        let embedder = embedder.filter(|_| config.use_embeddings);
        Ok(Self { config, embedder })
    }

    pub fn token_only(threshold: f64) -> Result<Self, MetricError> {
        Self::new(MatcherConfig { threshold, use_embeddings: false }, None)
    }

    /// The configuration as actually applied.
    pub fn config(&self) -> MatcherConfig {
        MatcherConfig { use_embeddings: self.embedder.is_some(), ..self.config }
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, MetricError> {
        let lexical = token_overlap_f1(a, b);
        match self.embedder {
            Some(e) if lexical < 1.0 && !(a.trim().is_empty() && b.trim().is_empty()) => {
                Ok(lexical.max(sentence_similarity(a, b, e)?))
            }
            _ => Ok(lexical),
        }
    }

    /// Ground-truth explanations matched by `pred`.
    pub fn count_matches<S: AsRef<str>>(&self, pred: &[S], refs: &[S]) -> Result<usize, MetricError> {
        let sims = pred
            .iter()
            .map(|p| refs.iter().map(|r| self.similarity(p.as_ref(), r.as_ref())).collect())
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        Ok(greedy_match(pred, refs, &sims, self.config.threshold).len())
    }
}

fn ratio(matched: usize, total: usize, name: &'static str) -> Result<f64, MetricError> {
    if total == 0 {
        Err(MetricError::Undefined(name))
    } else {
        Ok(matched as f64 / total as f64)
    }
}

/// Matched ground-truth explanations over all ground-truth explanations.
pub fn interpret_accuracy(
    preds: &[ParsedPrediction],
    refs: &[GroundTruth],
    matcher: &Matcher,
) -> Result<f64, MetricError> {
    let (mut matched, mut total) = (0, 0);
    for (p, r) in align(preds, refs)? {
        let pred = p.explanations.as_deref().unwrap_or_default();
        matched += matcher.count_matches(pred, &r.explanations)?;
        total += r.explanations.len();
    }
    ratio(matched, total, "interpret_accuracy")
}

/// The same tally over the uncertainty explanations of uncertain notes.
pub fn interpret_accuracy_eu(
    preds: &[ParsedPrediction],
    refs: &[GroundTruth],
    matcher: &Matcher,
) -> Result<f64, MetricError> {
    let (mut matched, mut total) = (0, 0);
    for (p, r) in align(preds, refs)? {
        if !r.is_uncertain() {
            continue;
        }
        let pred = p.uncertainty_explanations.as_deref().unwrap_or_default();
        matched += matcher.count_matches(pred, &r.uncertainty_explanations)?;
        total += r.uncertainty_explanations.len();
    }
    ratio(matched, total, "interpret_accuracy_eu")
}
