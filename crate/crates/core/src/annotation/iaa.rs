//! Agreement between two annotation passes over the same notes.
//!
//! Kappa is Cohen's kappa over binary "evidence present" decisions, one per
//! (note, criterion of the note's diagnosis). Span F1 pairs spans one-to-one
//! when they share a criterion and their character Jaccard is at least
//! [`SPAN_MATCH_JACCARD`].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{AnnotatedNote, AnnotationError, EvidenceSpan};
use crate::data::CriteriaSet;

pub const SPAN_MATCH_JACCARD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub span_overlap_f1: f64,
    pub n_items: usize,
}

pub fn compute_iaa(
    a: &[AnnotatedNote],
    b: &[AnnotatedNote],
    criteria: &CriteriaSet,
) -> Result<AgreementReport, AnnotationError> {
    let b_by_id: HashMap<&str, &AnnotatedNote> = b.iter().map(|n| (n.note_id(), n)).collect();
    let pairs: BTreeMap<&str, (&AnnotatedNote, &AnnotatedNote)> = a
        .iter()
        .filter_map(|x| b_by_id.get(x.note_id()).map(|y| (x.note_id(), (x, *y))))
        .collect();
    if pairs.is_empty() {
        return Err(AnnotationError::DisjointNotes);
    }

    // [[both absent, only b], [only a, both present]]
    let mut table = [[0usize; 2]; 2];
    let (mut matched, mut total_a, mut total_b) = (0usize, 0usize, 0usize);
    for (x, y) in pairs.values() {
        for c in criteria.criteria_for(&x.note.primary_diagnosis) {
            let ia = x.satisfied_criteria.contains(&c.criterion_id) as usize;
            let ib = y.satisfied_criteria.contains(&c.criterion_id) as usize;
            table[ia][ib] += 1;
        }
        matched += match_spans(&x.spans, &y.spans);
        total_a += x.spans.len();
        total_b += y.spans.len();
    }

    Ok(AgreementReport {
        kappa: cohen_kappa(&table),
        span_overlap_f1: if total_a + total_b == 0 {
            1.0
        } else {
            2.0 * matched as f64 / (total_a + total_b) as f64
        },
        n_items: pairs.len(),
    })
}

/// Kappa for a 2x2 table indexed `[rater_a][rater_b]`; 1 when both raters
/// are constant and equal (no variation to disagree on).
pub(crate) fn cohen_kappa(table: &[[usize; 2]; 2]) -> f64 {
    let n = (table[0][0] + table[0][1] + table[1][0] + table[1][1]) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let po = (table[0][0] + table[1][1]) as f64 / n;
    let a1 = (table[1][0] + table[1][1]) as f64 / n;
    let b1 = (table[0][1] + table[1][1]) as f64 / n;
    let pe = a1 * b1 + (1.0 - a1) * (1.0 - b1);
    if pe >= 1.0 {
        return if po >= 1.0 { 1.0 } else { 0.0 };
    }
    (po - pe) / (1.0 - pe)
}

fn jaccard(a: &EvidenceSpan, b: &EvidenceSpan) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    let union = a.end.max(b.end) - a.start.min(b.start);
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy one-to-one matching by descending Jaccard.
fn match_spans(a: &[EvidenceSpan], b: &[EvidenceSpan]) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if x.criterion_id == y.criterion_id {
                let jac = jaccard(x, y);
                if jac >= SPAN_MATCH_JACCARD {
                    pairs.push((jac, i, j));
                }
            }
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut n = 0;
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            n += 1;
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn identical_annotations_agree_perfectly() {
        let corpus = synth::SyntheticCorpus::generate(&synth::SynthConfig {
            diseases: 2,
            notes_per_disease: 5,
            seed: 4,
            ..Default::default()
        });
        let r = compute_iaa(&corpus.annotated, &corpus.annotated, &corpus.criteria).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.span_overlap_f1, 1.0);
        assert_eq!(r.n_items, 10);
    }

    #[test]
    fn silent_annotator_has_non_positive_kappa() {
        // A marks half of the cells, B marks none:
        // po = 0.5, pe = 0.5 * 0 + 0.5 * 1 = 0.5, kappa = 0.
        assert_eq!(cohen_kappa(&[[5, 0], [5, 0]]), 0.0);

        let corpus = synth::SyntheticCorpus::generate(&synth::SynthConfig {
            diseases: 1,
            notes_per_disease: 4,
            seed: 9,
            ..Default::default()
        });
        let mut silent = corpus.annotated.clone();
        for n in &mut silent {
            n.spans.clear();
            n.satisfied_criteria.clear();
        }
        let r = compute_iaa(&corpus.annotated, &silent, &corpus.criteria).unwrap();
        assert!(r.kappa <= 0.0, "{}", r.kappa);
        assert_eq!(r.span_overlap_f1, 0.0);
    }

    #[test]
    fn kappa_hand_table() {
        // po = 0.7, pa = 0.5, pb = 0.6, pe = 0.3 + 0.2 = 0.5, kappa = 0.4
        assert!((cohen_kappa(&[[4, 1], [2, 3]]) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn disjoint_ids_error() {
        let corpus = synth::SyntheticCorpus::generate(&synth::SynthConfig {
            diseases: 1,
            notes_per_disease: 4,
            seed: 1,
            ..Default::default()
        });
        let (a, b) = corpus.annotated.split_at(2);
        assert!(matches!(
            compute_iaa(a, b, &corpus.criteria),
            Err(AnnotationError::DisjointNotes)
        ));
    }

    #[test]
    fn kappa_is_symmetric() {
        let corpus = synth::SyntheticCorpus::generate(&synth::SynthConfig {
            diseases: 3,
            notes_per_disease: 6,
            seed: 2,
            ..Default::default()
        });
        // each pass misses one criterion on a different subset of notes
        let drop_every = |k: usize| {
            let mut notes = corpus.annotated.clone();
            for (i, n) in notes.iter_mut().enumerate() {
                if i % k == 0 {
                    let dropped = n.spans.pop().unwrap();
                    n.satisfied_criteria.remove(&dropped.criterion_id);
                }
            }
            notes
        };
        let (first, other) = (drop_every(2), drop_every(3));
        let ab = compute_iaa(&first, &other, &corpus.criteria).unwrap();
        let ba = compute_iaa(&other, &first, &corpus.criteria).unwrap();
        assert_eq!(ab.kappa, ba.kappa);
        assert_eq!(ab.span_overlap_f1, ba.span_overlap_f1);
        assert!(ab.kappa > 0.0 && ab.kappa < 1.0);
    }

    #[test]
    fn boundary_disagreement_tolerated() {
        let s = |start, end| EvidenceSpan { criterion_id: "c".into(), start, end, quote: String::new() };
        assert_eq!(match_spans(&[s(0, 10)], &[s(2, 10)]), 1); // jaccard 0.8
        assert_eq!(match_spans(&[s(0, 10)], &[s(6, 14)]), 0); // jaccard 4/14
    }
}
