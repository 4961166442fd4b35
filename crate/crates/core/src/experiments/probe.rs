use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::data::CriteriaSet;
use crate::gateway::{ChatClient, ChatRequest, GatewayError, Message};
use crate::metrics::{bootstrap_ci, BootstrapConfig, ConfusionCounts, MetricError, MetricValue};
use crate::taskgen::{parse_prediction, Subtask};
use crate::uncertainty::{CorpusEntry, UncertaintyLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Sufficient,
    Insufficient,
    /// The reply matched neither answer; scored as wrong.
    ParseFailed,
}

impl Verdict {
    pub fn label(self) -> Option<UncertaintyLabel> {
        match self {
            Verdict::Sufficient => Some(UncertaintyLabel::SufficientEvidence),
            Verdict::Insufficient => Some(UncertaintyLabel::InsufficientEvidence),
            Verdict::ParseFailed => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    pub note_id: String,
    pub verdict: Verdict,
    pub model_rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub verdicts: Vec<SufficiencyVerdict>,
    pub counts: ConfusionCounts,
    pub accuracy_eu: MetricValue,
    pub f1_eu: f64,
}

/// Zero-shot prompt: the note, its ground-truth diagnosis and that
/// disease's criteria.
pub fn probe_prompt(note_text: &str, diagnosis: &str, criteria: &[&str]) -> String {
    let mut p = format!(
        "The patient below has been diagnosed with {diagnosis}. The diagnostic criteria for {diagnosis} are:\n"
    );
    for c in criteria {
        p.push_str("- ");
        p.push_str(c);
        p.push('\n');
    }
    p.push_str(
        "\nDoes the clinical note contain sufficient evidence to satisfy these criteria? \
         Begin your answer with \"Sufficient information\" or \"Insufficient information\", \
         then briefly explain.\n\nClinical note:\n",
    );
    p.push_str(note_text);
    p
}

pub fn sufficiency_probe(
    entry: &CorpusEntry,
    criteria: &CriteriaSet,
    client: &dyn ChatClient,
    model_id: &str,
) -> Result<SufficiencyVerdict, ExperimentError> {
    let disease = criteria
        .disease(entry.disease_id())
        .ok_or_else(|| ExperimentError::Config(format!("unknown disease {}", entry.disease_id())))?;
    let rules: Vec<&str> = criteria.criteria_for(entry.disease_id()).map(|c| c.text.as_str()).collect();
    let prompt = probe_prompt(entry.text(), &disease.display_name, &rules);
    let reply = client.complete(&ChatRequest::new(model_id, vec![Message::user(prompt)]))?;
    let parsed = parse_prediction(entry.id(), &reply.text, Subtask::UncertaintyRecognition);
    let verdict = match parsed.uncertainty_label {
        Some(UncertaintyLabel::SufficientEvidence) => Verdict::Sufficient,
        Some(UncertaintyLabel::InsufficientEvidence) => Verdict::Insufficient,
        None => Verdict::ParseFailed,
    };
    Ok(SufficiencyVerdict { note_id: entry.id().to_string(), verdict, model_rationale: reply.text })
}

/// Probes every entry (up to `max_inflight` at once) and scores the
/// verdicts against the corpus labels. Any transport error fails the probe.
pub fn run_probe(
    entries: &[CorpusEntry],
    criteria: &CriteriaSet,
    client: &dyn ChatClient,
    model_id: &str,
    max_inflight: usize,
    bootstrap: BootstrapConfig,
) -> Result<ProbeOutcome, ExperimentError> {
    if entries.is_empty() {
        return Err(ExperimentError::Config("no notes to probe".into()));
    }
    let slots: Vec<Mutex<Option<Result<SufficiencyVerdict, ExperimentError>>>> =
        entries.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..max_inflight.clamp(1, entries.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = entries.get(i) else { break };
                let r = sufficiency_probe(entry, criteria, client, model_id);
                let stop = r.is_err();
                *slots[i].lock() = Some(r);
                if stop {
                    next.store(entries.len(), Ordering::SeqCst);
                }
            });
        }
    });
    let verdicts = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|| Err(GatewayError::Transport("probe aborted".into()).into())))
        .collect::<Result<Vec<_>, _>>()?;

    let items: Vec<(bool, Option<UncertaintyLabel>)> = entries
        .iter()
        .zip(&verdicts)
        .map(|(e, v)| (e.uncertainty_label() == UncertaintyLabel::InsufficientEvidence, v.verdict.label()))
        .collect();
    let tally = |xs: &[&(bool, Option<UncertaintyLabel>)]| {
        let mut c = ConfusionCounts::default();
        xs.iter().for_each(|(u, l)| c.add(*u, *l));
        c
    };
    let all: Vec<_> = items.iter().collect();
    let counts = tally(&all);
    let accuracy_eu = match bootstrap_ci("probe_accuracy_eu", &items, |xs| tally(xs).accuracy_eu(), bootstrap) {
        Err(MetricError::TooFewRecords(_)) => {
            let a = counts.accuracy_eu()?;
            MetricValue { name: "probe_accuracy_eu".into(), mean: a, ci_low: a, ci_high: a, n: 1, iterations: 0, estimate: a }
        }
        other => other?,
    };
    Ok(ProbeOutcome { verdicts, f1_eu: counts.precision_recall().f1, counts, accuracy_eu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::FnClient;
    use crate::synth::{liver_failure_criteria, SynthConfig, SyntheticCorpus};
    use crate::uncertainty::{build_balanced_corpus, BalanceOptions, ReviewDecisions};

    fn corpus() -> (CriteriaSet, Vec<CorpusEntry>) {
        let c = SyntheticCorpus::generate(&SynthConfig { diseases: 2, notes_per_disease: 6, seed: 8, ..Default::default() });
        let out = build_balanced_corpus(&c.annotated, &c.criteria, BalanceOptions::default(), &ReviewDecisions::new())
            .unwrap();
        (c.criteria, out.entries)
    }

    /// Answers from the note's label; the prompt's note text identifies it.
    fn oracle(entries: &[CorpusEntry]) -> impl Fn(&ChatRequest, usize) -> Result<String, GatewayError> + Send + Sync + '_ {
        move |req, _| {
            let p = req.last_user_content().unwrap();
            let e = entries.iter().find(|e| p.ends_with(e.text())).unwrap();
            Ok(match e.uncertainty_label() {
                UncertaintyLabel::SufficientEvidence => "Sufficient information.".into(),
                UncertaintyLabel::InsufficientEvidence => {
                    format!("Insufficient information. Missing: {}", e.uncertainty_explanations().join("; "))
                }
            })
        }
    }

    #[test]
    fn prompt_carries_diagnosis_and_criteria() {
        let set = liver_failure_criteria();
        let rules: Vec<&str> = set.criteria_for("acute_liver_failure").map(|c| c.text.as_str()).collect();
        let p = probe_prompt("NOTE", "Acute liver failure", &rules);
        assert!(p.contains("diagnosed with Acute liver failure"));
        assert!(p.contains("- INR ≥ 1.5\n"));
        assert!(p.ends_with("Clinical note:\nNOTE"));
    }

    #[test]
    fn verdicts_follow_ground_truth() {
        let (criteria, entries) = corpus();
        let client = FnClient::new(oracle(&entries));
        for e in &entries {
            let v = sufficiency_probe(e, &criteria, &client, "m").unwrap();
            let want = match e.uncertainty_label() {
                UncertaintyLabel::SufficientEvidence => Verdict::Sufficient,
                UncertaintyLabel::InsufficientEvidence => Verdict::Insufficient,
            };
            assert_eq!(v.verdict, want, "{}", e.id());
        }
        let out = run_probe(&entries, &criteria, &client, "m", 3, BootstrapConfig { iterations: 30, ..Default::default() })
            .unwrap();
        assert_eq!(out.accuracy_eu.estimate, 1.0);
        assert_eq!(out.f1_eu, 1.0);
    }

    #[test]
    fn garbled_reply_is_parse_failed_and_wrong() {
        let (criteria, entries) = corpus();
        let client = FnClient::new(|_: &ChatRequest, _| Ok("I cannot tell.".to_string()));
        let v = sufficiency_probe(&entries[0], &criteria, &client, "m").unwrap();
        assert_eq!(v.verdict, Verdict::ParseFailed);
        let out = run_probe(&entries, &criteria, &client, "m", 2, BootstrapConfig { iterations: 10, ..Default::default() })
            .unwrap();
        assert_eq!(out.accuracy_eu.estimate, 0.0);
        assert_eq!(out.counts.tp + out.counts.tn, 0);
    }

    #[test]
    fn transport_error_fails_probe() {
        let (criteria, entries) = corpus();
        let client = FnClient::new(|_: &ChatRequest, _| -> Result<String, GatewayError> {
            Err(GatewayError::Transport("refused".into()))
        });
        assert!(run_probe(&entries, &criteria, &client, "m", 2, BootstrapConfig::default()).is_err());
    }
}
