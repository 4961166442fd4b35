use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{sentence_segments, MaskError, MaskedNote, ReviewStatus, UncertaintyLabel};
use crate::annotation::{char_slice, AnnotatedNote, EvidenceSpan};
use crate::data::{Completeness, CriteriaSet};
use crate::rng::derived_rng;

/// Fresh selection orders tried before a note is declared infeasible.
pub const MASK_ATTEMPTS: usize = 64;

pub fn uncertainty_explanation(criterion_text: &str) -> String {
    format!("Lack of evidence on \"{criterion_text}\"")
}

/// Masks `k` evidence criteria of a complete note by deleting every sentence
/// that holds one of their spans.
///
/// The unit of masking is a criterion: all spans bound to a chosen criterion
/// go together, otherwise a second quote could keep the criterion satisfied.
/// A selection is valid when no surviving span loses its sentence, no masked
/// quote still occurs anywhere in the text, and the note becomes
/// insufficient under the criteria set.
pub fn mask_evidence(
    note: &AnnotatedNote,
    criteria: &CriteriaSet,
    k: usize,
    seed: u64,
) -> Result<MaskedNote, MaskError> {
    let note_id = note.note_id().to_string();
    if note.completeness != Completeness::EvidenceComplete {
        return Err(MaskError::NotComplete(note_id));
    }
    let mut units: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in note.spans.iter().enumerate() {
        units.entry(s.criterion_id.as_str()).or_default().push(i);
    }
    let max = units.len().saturating_sub(1);
    if k == 0 || k > max {
        return Err(MaskError::KOutOfRange { note_id, k, max });
    }

    let ctx = Context::new(note);
    let ids: Vec<&str> = units.keys().copied().collect();
    let mut rng = derived_rng(seed, &format!("mask/{note_id}"));

    for _ in 0..MASK_ATTEMPTS {
        let mut order = ids.clone();
        order.shuffle(&mut rng);
        let mut chosen: Vec<&str> = Vec::with_capacity(k);
        let mut rendered = None;
        for c in order {
            if chosen.len() == k {
                break;
            }
            chosen.push(c);
            let masked: BTreeSet<usize> =
                chosen.iter().flat_map(|c| units[c].iter().copied()).collect();
            match ctx.render(&masked) {
                Some(r) => rendered = Some(r),
                None => {
                    log::debug!("{note_id}: masking {c} would damage surviving evidence");
                    chosen.pop();
                }
            }
        }
        let Some((text, spans)) = rendered.filter(|_| chosen.len() == k) else {
            continue;
        };
        let surviving: BTreeSet<String> = spans.iter().map(|s| s.criterion_id.clone()).collect();
        if criteria.is_sufficient(&note.note.primary_diagnosis, &surviving) {
            continue;
        }

        let masked_criteria: BTreeSet<String> = chosen.iter().map(|c| c.to_string()).collect();
        let uncertainty_explanation = masked_criteria
            .iter()
            .map(|c| {
                criteria
                    .criterion(c)
                    .map(|cr| uncertainty_explanation(&cr.text))
                    .ok_or_else(|| MaskError::UnknownCriterion(c.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(MaskedNote {
            masked_note_id: format!("{note_id}-masked"),
            base_note_id: note_id,
            primary_diagnosis: note.note.primary_diagnosis.clone(),
            text,
            masked_criteria,
            uncertainty_label: UncertaintyLabel::InsufficientEvidence,
            uncertainty_explanation,
            review_status: ReviewStatus::Pending,
            spans,
        });
    }
    Err(MaskError::Infeasible { note_id, k })
}

struct Context<'a> {
    note: &'a AnnotatedNote,
    segments: Vec<(usize, usize)>,
    /// Segment indices each span touches.
    touched: Vec<Vec<usize>>,
}

impl<'a> Context<'a> {
    fn new(note: &'a AnnotatedNote) -> Self {
        let segments = sentence_segments(&note.note.text);
        let touched = note
            .spans
            .iter()
            .map(|s| {
                segments
                    .iter()
                    .enumerate()
                    .filter(|(_, (a, b))| *a < s.end && s.start < *b)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Self { note, segments, touched }
    }

    /// Masked text and re-aligned surviving spans, or `None` when the
    /// selection breaks an invariant.
    fn render(&self, masked: &BTreeSet<usize>) -> Option<(String, Vec<EvidenceSpan>)> {
        let removed: BTreeSet<usize> =
            masked.iter().flat_map(|&i| self.touched[i].iter().copied()).collect();
        let survivors: Vec<usize> = (0..self.note.spans.len()).filter(|i| !masked.contains(i)).collect();
        if survivors
            .iter()
            .any(|&i| self.touched[i].iter().any(|seg| removed.contains(seg)))
        {
            return None;
        }

        let src = &self.note.note.text;
        let mut text = String::with_capacity(src.len());
        // (segment start, chars removed before it), for the kept segments
        let mut shift = Vec::new();
        let mut dropped = 0;
        for (i, &(a, b)) in self.segments.iter().enumerate() {
            if removed.contains(&i) {
                dropped += b - a;
            } else {
                text.push_str(char_slice(src, a, b)?);
                shift.push((a, dropped));
            }
        }

        let spans: Vec<EvidenceSpan> = survivors
            .iter()
            .map(|&i| {
                let s = &self.note.spans[i];
                let d = shift.iter().rev().find(|(a, _)| *a <= s.start).map_or(0, |x| x.1);
                EvidenceSpan {
                    criterion_id: s.criterion_id.clone(),
                    start: s.start - d,
                    end: s.end - d,
                    quote: s.quote.clone(),
                }
            })
            .collect();

        let masked_gone = masked.iter().all(|&i| !text.contains(&self.note.spans[i].quote));
        let kept_present = spans
            .iter()
            .all(|s| char_slice(&text, s.start, s.end) == Some(s.quote.as_str()));
        (masked_gone && kept_present).then_some((text, spans))
    }
}
