use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    align, bertscore_greedy, bootstrap_ci, diagnosis_correct, stable_mean, sentence_similarity, BootstrapConfig,
    ConfusionCounts, Matcher, MatcherConfig, Meteor, MetricError, MetricValue,
};
use crate::gateway::{Embedder, EmbeddingCapability};
use crate::jsonl;
use crate::taskgen::{GroundTruth, ParsedPrediction, Subtask};
use crate::uncertainty::UncertaintyLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub subtask: Subtask,
    pub metrics: Vec<MetricValue>,
    pub matcher_config: MatcherConfig,
    pub seed: u64,
    /// Metrics left out because they are undefined on this data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

impl MetricReport {
    pub fn metric(&self, name: &str) -> Option<&MetricValue> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

pub struct EvalContext<'a> {
    pub matcher: Matcher<'a>,
    /// Token or sentence vectors for BERTScore and sentence similarity.
    pub embedder: Option<&'a dyn Embedder>,
    pub meteor: &'a Meteor,
    pub bootstrap: BootstrapConfig,
}

struct Builder {
    report: MetricReport,
    bootstrap: BootstrapConfig,
}

impl Builder {
    fn add<T: Sync>(
        &mut self,
        name: &str,
        items: &[T],
        f: impl Fn(&[&T]) -> Result<f64, MetricError> + Sync,
    ) -> Result<(), MetricError> {
        match bootstrap_ci(name, items, f, self.bootstrap) {
            Ok(v) => self.report.metrics.push(v),
            Err(e @ (MetricError::Undefined(_) | MetricError::TooFewRecords(_))) => {
                log::warn!("{} {}: {name} skipped: {e}", self.report.run_id, self.report.subtask);
                self.report.skipped.push(name.to_string());
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }
}

fn mean(xs: &[&f64]) -> Result<f64, MetricError> {
    if xs.is_empty() {
        return Err(MetricError::Undefined("mean"));
    }
    Ok(stable_mean(xs.iter().map(|x| **x)))
}

fn pooled(items: &[&(usize, usize)], name: &'static str) -> Result<f64, MetricError> {
    let (m, t) = items.iter().fold((0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    if t == 0 {
        Err(MetricError::Undefined(name))
    } else {
        Ok(m as f64 / t as f64)
    }
}

/// Scores one subtask with bootstrap intervals. Per-note quantities are
/// computed once; each bootstrap iteration only re-aggregates them.
pub fn evaluate_subtask(
    run_id: &str,
    subtask: Subtask,
    preds: &[ParsedPrediction],
    refs: &[GroundTruth],
    ctx: &EvalContext,
) -> Result<MetricReport, MetricError> {
    let pairs = align(preds, refs)?;
    let mut b = Builder {
        report: MetricReport {
            run_id: run_id.to_string(),
            subtask,
            metrics: Vec::new(),
            matcher_config: ctx.matcher.config(),
            seed: ctx.bootstrap.seed,
            skipped: Vec::new(),
        },
        bootstrap: ctx.bootstrap,
    };

    match subtask {
        Subtask::DiseaseDiagnosis => {
            let correct: Vec<f64> = pairs.iter().map(|(p, r)| diagnosis_correct(p, r) as u8 as f64).collect();
            b.add("diagnostic_accuracy", &correct, mean)?;
        }
        Subtask::UncertaintyRecognition => {
            let items: Vec<(bool, Option<UncertaintyLabel>)> =
                pairs.iter().map(|(p, r)| (r.is_uncertain(), p.uncertainty_label)).collect();
            let counts = |xs: &[&(bool, Option<UncertaintyLabel>)]| {
                let mut c = ConfusionCounts::default();
                xs.iter().for_each(|(u, l)| c.add(*u, *l));
                c
            };
            b.add("accuracy_eu", &items, |xs| counts(xs).accuracy_eu())?;
            b.add("precision_eu", &items, |xs| Ok(counts(xs).precision_recall().precision))?;
            b.add("recall_eu", &items, |xs| Ok(counts(xs).precision_recall().recall))?;
            b.add("f1_eu", &items, |xs| Ok(counts(xs).precision_recall().f1))?;
        }
        Subtask::DiagnosticExplanation => {
            let mut tallies = Vec::with_capacity(pairs.len());
            let mut meteor = Vec::with_capacity(pairs.len());
            let mut bert = Vec::new();
            let mut sbert = Vec::new();
            let token_level = ctx
                .embedder
                .filter(|e| e.capability() == EmbeddingCapability::TokenLevel);
            for (p, r) in &pairs {
                let pred = p.explanations.as_deref().unwrap_or_default();
                tallies.push((ctx.matcher.count_matches(pred, &r.explanations)?, r.explanations.len()));
                let (cand, reference) = (pred.join(" "), r.explanations.join(" "));
                meteor.push(ctx.meteor.score(&cand, &reference).score);
                if let Some(e) = token_level {
                    bert.push(bertscore_greedy(&cand, &reference, e)?.f1);
                }
                if let Some(e) = ctx.embedder {
                    sbert.push(match sentence_similarity(&cand, &reference, e) {
                        Err(MetricError::EmptyInput) => 0.0,
                        other => other?,
                    });
                }
            }
            b.add("interpret_accuracy", &tallies, |xs| pooled(xs, "interpret_accuracy"))?;
            b.add("meteor", &meteor, mean)?;
            if ctx.embedder.is_some() {
                if token_level.is_some() {
                    b.add("bertscore_f1", &bert, mean)?;
                }
                b.add("sentence_similarity", &sbert, mean)?;
            }
        }
        Subtask::UncertaintyExplanation => {
            let mut tallies = Vec::with_capacity(pairs.len());
            for (p, r) in &pairs {
                if r.is_uncertain() {
                    let pred = p.uncertainty_explanations.as_deref().unwrap_or_default();
                    let m = ctx.matcher.count_matches(pred, &r.uncertainty_explanations)?;
                    tallies.push((m, r.uncertainty_explanations.len()));
                } else {
                    // resampled with the rest so the draw is over notes
                    tallies.push((0, 0));
                }
            }
            b.add("interpret_accuracy_eu", &tallies, |xs| pooled(xs, "interpret_accuracy_eu"))?;
        }
    }
    Ok(b.report)
}

pub fn save_reports(reports: &[MetricReport], path: &Path) -> Result<(), MetricError> {
    Ok(jsonl::write_json(path, &reports)?)
}

pub fn load_reports(path: &Path) -> Result<Vec<MetricReport>, MetricError> {
    Ok(jsonl::read_json(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::StubEmbedder;
    use crate::synth::{SynthConfig, SyntheticCorpus};
    use crate::taskgen::parse_prediction;
    use crate::uncertainty::{build_balanced_corpus, BalanceOptions, ReviewDecisions};

    fn truths() -> Vec<GroundTruth> {
        let c = SyntheticCorpus::generate(&SynthConfig { diseases: 2, notes_per_disease: 6, seed: 2, ..Default::default() });
        let out = build_balanced_corpus(&c.annotated, &c.criteria, BalanceOptions::default(), &ReviewDecisions::new())
            .unwrap();
        out.entries.iter().map(|e| GroundTruth::from_entry(e, &c.criteria)).collect()
    }

    #[test]
    fn oracle_answers_score_one() {
        let refs = truths();
        let stub = StubEmbedder::new(32, 0).unwrap();
        let meteor = Meteor::default();
        let ctx = EvalContext {
            matcher: Matcher::new(MatcherConfig::default(), Some(&stub)).unwrap(),
            embedder: Some(&stub),
            meteor: &meteor,
            bootstrap: BootstrapConfig { iterations: 50, ..Default::default() },
        };
        for t in Subtask::ALL {
            let preds: Vec<_> = refs.iter().map(|r| parse_prediction(&r.note_id, &r.answer(t), t)).collect();
            let rep = evaluate_subtask("r", t, &preds, &refs, &ctx).unwrap();
            assert!(rep.skipped.is_empty(), "{t}: {:?}", rep.skipped);
            for name in ["diagnostic_accuracy", "accuracy_eu", "f1_eu", "interpret_accuracy", "interpret_accuracy_eu"] {
                if let Some(m) = rep.metric(name) {
                    assert_eq!((m.estimate, m.mean, m.ci_low, m.ci_high), (1.0, 1.0, 1.0, 1.0), "{name}");
                }
            }
        }
    }

    #[test]
    fn always_sufficient_scores_zero() {
        let refs = truths();
        let meteor = Meteor::default();
        let ctx = EvalContext {
            matcher: Matcher::token_only(0.7).unwrap(),
            embedder: None,
            meteor: &meteor,
            bootstrap: BootstrapConfig { iterations: 20, ..Default::default() },
        };
        let t = Subtask::UncertaintyRecognition;
        let preds: Vec<_> = refs
            .iter()
            .map(|r| parse_prediction(&r.note_id, "Sufficient information", t))
            .collect();
        let rep = evaluate_subtask("r", t, &preds, &refs, &ctx).unwrap();
        assert_eq!(rep.metric("accuracy_eu").unwrap().estimate, 0.0);
        assert_eq!(rep.metric("f1_eu").unwrap().estimate, 0.0);
    }
}
