use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{mask_evidence, CorpusEntry, MaskError, ReviewStatus};
use crate::annotation::AnnotatedNote;
use crate::data::{Completeness, CriteriaSet};
use crate::rng::{derived_rng, derived_seed};

/// Expert decisions already recorded, keyed by masked note id.
pub type ReviewDecisions = HashMap<String, ReviewStatus>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceOptions {
    pub seed: u64,
    /// Criteria masked per note.
    pub k: usize,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self { seed: 0, k: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceWarning {
    pub disease_id: String,
    pub complete: usize,
    pub masked: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceOutcome {
    pub entries: Vec<CorpusEntry>,
    pub warnings: Vec<BalanceWarning>,
}

impl BalanceOutcome {
    /// (complete, masked) per disease.
    pub fn counts(&self) -> BTreeMap<String, (usize, usize)> {
        let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for e in &self.entries {
            let c = out.entry(e.disease_id().to_string()).or_default();
            match e {
                CorpusEntry::Complete(_) => c.0 += 1,
                CorpusEntry::Masked(_) => c.1 += 1,
            }
        }
        out
    }
}

/// Replaces half of each disease's notes (rounded down) with masked variants.
///
/// Candidates are visited in a seeded order. A note that cannot be masked,
/// or whose masked variant an expert already rejected, stays complete and
/// the next candidate is tried. Output size always equals input size.
pub fn build_balanced_corpus(
    complete: &[AnnotatedNote],
    criteria: &CriteriaSet,
    options: BalanceOptions,
    decisions: &ReviewDecisions,
) -> Result<BalanceOutcome, MaskError> {
    let mut by_disease: BTreeMap<&str, Vec<&AnnotatedNote>> = BTreeMap::new();
    for n in complete {
        if n.completeness != Completeness::EvidenceComplete {
            return Err(MaskError::NotComplete(n.note_id().to_string()));
        }
        by_disease.entry(n.note.primary_diagnosis.as_str()).or_default().push(n);
    }

    let mut entries = Vec::with_capacity(complete.len());
    let mut warnings = Vec::new();
    for (disease, mut notes) in by_disease {
        notes.sort_by(|a, b| a.note_id().cmp(b.note_id()));
        let target = notes.len() / 2;
        if target == 0 {
            warnings.push(BalanceWarning {
                disease_id: disease.to_string(),
                complete: notes.len(),
                masked: 0,
                reason: "fewer than two eligible notes".into(),
            });
        }
        notes.shuffle(&mut derived_rng(options.seed, &format!("balance/{disease}")));

        let mut masked = 0;
        for note in notes {
            if masked < target {
                let seed = derived_seed(options.seed, note.note_id());
                match mask_evidence(note, criteria, options.k, seed) {
                    Ok(mut m) => {
                        let status = decisions.get(&m.masked_note_id).copied().unwrap_or_default();
                        if status != ReviewStatus::Rejected {
                            m.review_status = status;
                            entries.push(CorpusEntry::Masked(m));
                            masked += 1;
                            continue;
                        }
                        log::info!("{}: masked variant was rejected in review", note.note_id());
                    }
                    Err(e @ (MaskError::KOutOfRange { .. } | MaskError::Infeasible { .. })) => {
                        log::info!("{e}; keeping the note complete");
                    }
                    Err(e) => return Err(e),
                }
            }
            entries.push(CorpusEntry::Complete(note.clone()));
        }
        if target > 0 && masked < target {
            let n = entries.iter().filter(|e| e.disease_id() == disease).count();
            warnings.push(BalanceWarning {
                disease_id: disease.to_string(),
                complete: n - masked,
                masked,
                reason: format!("only {masked} of {target} notes could be masked"),
            });
        }
    }
    entries.sort_by(|a, b| (a.disease_id(), a.id()).cmp(&(b.disease_id(), b.id())));
    Ok(BalanceOutcome { entries, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SynthConfig, SyntheticCorpus};

    fn corpus(diseases: usize, per: usize, seed: u64) -> SyntheticCorpus {
        SyntheticCorpus::generate(&SynthConfig {
            diseases,
            notes_per_disease: per,
            seed,
            ..Default::default()
        })
    }

    #[test]
    fn ten_notes_split_five_five() {
        let c = corpus(1, 10, 3);
        let out = build_balanced_corpus(&c.annotated, &c.criteria, BalanceOptions::default(), &ReviewDecisions::new())
            .unwrap();
        assert_eq!(out.entries.len(), 10);
        assert_eq!(out.counts().into_values().collect::<Vec<_>>(), vec![(5, 5)]);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn odd_count_within_one() {
        let c = corpus(3, 7, 5);
        let out = build_balanced_corpus(&c.annotated, &c.criteria, BalanceOptions::default(), &ReviewDecisions::new())
            .unwrap();
        assert_eq!(out.entries.len(), 21);
        for (complete, masked) in out.counts().into_values() {
            assert_eq!((complete, masked), (4, 3));
        }
    }

    #[test]
    fn single_note_disease_warns() {
        let c = corpus(2, 1, 0);
        let out = build_balanced_corpus(&c.annotated, &c.criteria, BalanceOptions::default(), &ReviewDecisions::new())
            .unwrap();
        assert_eq!(out.entries.len(), 2);
        assert_eq!(out.warnings.len(), 2);
    }

    #[test]
    fn rejected_variants_are_replaced() {
        let c = corpus(1, 10, 8);
        let opts = BalanceOptions { seed: 2, k: 1 };
        let first = build_balanced_corpus(&c.annotated, &c.criteria, opts, &ReviewDecisions::new()).unwrap();
        let rejected: ReviewDecisions = first
            .entries
            .iter()
            .filter(|e| matches!(e, CorpusEntry::Masked(_)))
            .take(2)
            .map(|e| (e.id().to_string(), ReviewStatus::Rejected))
            .collect();
        let second = build_balanced_corpus(&c.annotated, &c.criteria, opts, &rejected).unwrap();
        assert_eq!(second.counts().into_values().next(), Some((5, 5)));
        for id in rejected.keys() {
            assert!(second.entries.iter().all(|e| e.id() != id));
        }
    }

    #[test]
    fn deterministic() {
        let c = corpus(4, 9, 1);
        let run = || {
            build_balanced_corpus(&c.annotated, &c.criteria, BalanceOptions { seed: 11, k: 1 }, &ReviewDecisions::new())
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
