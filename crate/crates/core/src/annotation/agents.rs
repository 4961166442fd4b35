//! Two-role annotation protocol.
//!
//! The extractor proposes `(criterion_id, quote)` pairs as a JSON array. Pairs
//! whose quote cannot be aligned to the note, or whose criterion does not
//! belong to the note's diagnosis, are dropped before the verifier sees them.
//! The verifier answers with the indices of candidates it accepts. Each role
//! gets one reprompt for malformed output before the note fails.

use serde::{Deserialize, Serialize};

use super::{align_quote, char_slice, AnnotatedNote, AnnotationError, EvidenceSpan};
use crate::data::{CriteriaSet, Criterion, NoteRecord};
use crate::gateway::{ChatClient, ChatRequest, Message};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            model_id: "annotator".into(),
            temperature: 0.0,
            max_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    QuoteNotInNote,
    UnknownCriterion,
    RejectedByVerifier,
    OverlapsAcceptedSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub criterion_id: String,
    pub quote: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationOutcome {
    pub annotated: AnnotatedNote,
    pub dropped: Vec<DroppedPair>,
}

#[derive(Debug, Clone, Deserialize)]
struct ProposedPair {
    criterion_id: String,
    quote: String,
}

const EXTRACTOR_SYSTEM: &str = "You are a clinical evidence extractor. For each diagnostic \
criterion, find sentences or phrases in the clinical note that provide evidence for it. Copy \
every quote character-for-character from the note. Answer only with a JSON array of objects \
of the form {\"criterion_id\": \"...\", \"quote\": \"...\"}. Answer [] when there is no evidence.";

const VERIFIER_SYSTEM: &str = "You are a clinical evidence verifier. For each numbered \
candidate, decide whether the quoted note text satisfies the stated diagnostic criterion. \
Answer only with a JSON array of the numbers of the candidates you accept, for example [0, 2].";

const REPROMPT: &str = "Your previous answer could not be parsed. Reply again with only the \
JSON array, no other text.";

fn extractor_prompt(note: &NoteRecord, disease: &str, criteria: &[&Criterion]) -> String {
    let mut p = format!("Diagnosis: {disease}\n\nDiagnostic criteria:\n");
    for c in criteria {
        p.push_str(&format!("- [{}] {}\n", c.criterion_id, c.text));
    }
    p.push_str("\nClinical note:\n");
    p.push_str(&note.text);
    p
}

fn verifier_prompt(candidates: &[(&Criterion, &str)]) -> String {
    let mut p = String::from("Candidates:\n");
    for (i, (c, quote)) in candidates.iter().enumerate() {
        p.push_str(&format!("{i}. criterion [{}] {}\n   quote: {quote}\n", c.criterion_id, c.text));
    }
    p
}

/// Extracts the outermost `[...]` block and parses it as JSON.
fn parse_array<T: for<'de> Deserialize<'de>>(reply: &str) -> Result<Vec<T>, String> {
    let start = reply.find('[').ok_or("no JSON array in reply")?;
    let end = reply.rfind(']').ok_or("unterminated JSON array")?;
    if end < start {
        return Err("unterminated JSON array".into());
    }
    serde_json::from_str(&reply[start..=end]).map_err(|e| e.to_string())
}

fn ask<T: for<'de> Deserialize<'de>>(
    client: &dyn ChatClient,
    config: &AnnotatorConfig,
    role: &'static str,
    system: &str,
    prompt: String,
) -> Result<Vec<T>, AnnotationError> {
    let mut messages = vec![Message::system(system), Message::user(prompt)];
    let mut detail = String::new();
    for _ in 0..2 {
        let req = ChatRequest {
            model_id: config.model_id.clone(),
            messages: messages.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        };
        let reply = client.complete(&req)?.text;
        match parse_array(&reply) {
            Ok(v) => return Ok(v),
            Err(e) => {
                detail = e;
                messages.push(Message::assistant(reply));
                messages.push(Message::user(REPROMPT));
            }
        }
    }
    Err(AnnotationError::MalformedAgentOutput { role, detail })
}

pub fn annotate_evidence(
    note: &NoteRecord,
    criteria: &CriteriaSet,
    client: &dyn ChatClient,
    config: &AnnotatorConfig,
) -> Result<AnnotationOutcome, AnnotationError> {
    let disease = criteria
        .disease(&note.primary_diagnosis)
        .ok_or_else(|| AnnotationError::UnknownDiagnosis {
            note_id: note.note_id.clone(),
            diagnosis: note.primary_diagnosis.clone(),
        })?;
    let rules: Vec<&Criterion> = criteria.criteria_for(&disease.disease_id).collect();

    let proposed: Vec<ProposedPair> = ask(
        client,
        config,
        "extractor",
        EXTRACTOR_SYSTEM,
        extractor_prompt(note, &disease.display_name, &rules),
    )?;

    let mut dropped = Vec::new();
    let mut reject = |p: &ProposedPair, reason: DropReason| {
        log::warn!(
            "note {}: dropping ({}, {:?}): {reason:?}",
            note.note_id,
            p.criterion_id,
            p.quote
        );
        dropped.push(DroppedPair {
            criterion_id: p.criterion_id.clone(),
            quote: p.quote.clone(),
            reason,
        });
    };

    let mut candidates: Vec<(&Criterion, EvidenceSpan, &ProposedPair)> = Vec::new();
    for p in &proposed {
        let Some(rule) = rules.iter().find(|c| c.criterion_id == p.criterion_id) else {
            reject(p, DropReason::UnknownCriterion);
            continue;
        };
        let Some((start, end)) = align_quote(&note.text, &p.quote) else {
            reject(p, DropReason::QuoteNotInNote);
            continue;
        };
        let quote = char_slice(&note.text, start, end).expect("aligned offsets").to_string();
        candidates.push((rule, EvidenceSpan { criterion_id: p.criterion_id.clone(), start, end, quote }, p));
    }

    let accepted: Vec<usize> = if candidates.is_empty() {
        Vec::new()
    } else {
        let listing: Vec<(&Criterion, &str)> =
            candidates.iter().map(|(c, s, _)| (*c, s.quote.as_str())).collect();
        ask(client, config, "verifier", VERIFIER_SYSTEM, verifier_prompt(&listing))?
    };

    let mut kept: Vec<EvidenceSpan> = Vec::new();
    let mut pending: Vec<(EvidenceSpan, &ProposedPair)> = Vec::new();
    for (i, (_, span, p)) in candidates.into_iter().enumerate() {
        if accepted.contains(&i) {
            pending.push((span, p));
        } else {
            reject(p, DropReason::RejectedByVerifier);
        }
    }
    pending.sort_by_key(|a| (a.0.start, a.0.end));
    for (span, p) in pending {
        if kept.iter().any(|k| k.overlaps(&span)) {
            reject(p, DropReason::OverlapsAcceptedSpan);
        } else {
            kept.push(span);
        }
    }

    let annotated = AnnotatedNote::from_spans(note.clone(), kept, criteria)?;
    Ok(AnnotationOutcome { annotated, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Completeness, NoteSource};
    use crate::gateway::mock::FnClient;
    use crate::gateway::GatewayError;
    use crate::synth;

    fn liver_note() -> (CriteriaSet, NoteRecord) {
        let set = synth::liver_failure_criteria();
        let note = NoteRecord::new(
            "n1",
            "Patient developed the symptoms for less than 7 weeks. Head CT showed diffuse cerebral edema. \
             Labs: INR-1.6 BLOOD ALT-2705. No prior history of cirrhosis.",
            "acute_liver_failure",
            NoteSource::Synthetic,
        );
        (set, note)
    }

    fn agent(extract: &'static str, verify: &'static str) -> impl ChatClient {
        FnClient::new(move |req: &ChatRequest, _| {
            let system = &req.messages[0].content;
            Ok(if system.contains("extractor") { extract } else { verify }.to_string())
        })
    }

    #[test]
    fn verbatim_quote_becomes_span() {
        let (set, note) = liver_note();
        let client = agent(r#"[{"criterion_id":"alf_inr","quote":"INR-1.6"}]"#, "[0]");
        let out = annotate_evidence(&note, &set, &client, &AnnotatorConfig::default()).unwrap();
        assert_eq!(out.annotated.spans.len(), 1);
        let span = &out.annotated.spans[0];
        assert_eq!(span.quote, "INR-1.6");
        assert_eq!(char_slice(&note.text, span.start, span.end), Some("INR-1.6"));
        assert_eq!(out.annotated.completeness, Completeness::EvidenceIncomplete);
    }

    #[test]
    fn typo_quote_is_dropped_and_reported() {
        let (set, note) = liver_note();
        let client = agent(
            r#"[{"criterion_id":"alf_inr","quote":"INR-1.6"},{"criterion_id":"alf_enceph","quote":"chest pian"}]"#,
            "[0]",
        );
        let out = annotate_evidence(&note, &set, &client, &AnnotatorConfig::default()).unwrap();
        assert!(!note.text.contains("chest pian"));
        assert_eq!(out.annotated.spans.len(), 1);
        assert_eq!(
            out.dropped,
            vec![DroppedPair {
                criterion_id: "alf_enceph".into(),
                quote: "chest pian".into(),
                reason: DropReason::QuoteNotInNote
            }]
        );
    }

    #[test]
    fn no_evidence_is_incomplete() {
        let (set, note) = liver_note();
        let client = agent("[]", "[]");
        let out = annotate_evidence(&note, &set, &client, &AnnotatorConfig::default()).unwrap();
        assert!(out.annotated.spans.is_empty());
        assert_eq!(out.annotated.completeness, Completeness::EvidenceIncomplete);
    }

    #[test]
    fn full_evidence_is_complete_and_verifier_filters() {
        let (set, note) = liver_note();
        let client = agent(
            r#"Here you go: [
              {"criterion_id":"alf_onset","quote":"developed the symptoms for less than 7 weeks"},
              {"criterion_id":"alf_enceph","quote":"Head CT showed diffuse cerebral edema"},
              {"criterion_id":"alf_inr","quote":"INR-1.6"},
              {"criterion_id":"alf_no_cirrhosis","quote":"No prior history of cirrhosis"},
              {"criterion_id":"alf_inr","quote":"ALT-2705"},
              {"criterion_id":"not_a_rule","quote":"Labs"}
            ]"#,
            "[0, 1, 2, 3]",
        );
        let out = annotate_evidence(&note, &set, &client, &AnnotatorConfig::default()).unwrap();
        assert_eq!(out.annotated.spans.len(), 4);
        assert_eq!(out.annotated.completeness, Completeness::EvidenceComplete);
        let reasons: Vec<DropReason> = out.dropped.iter().map(|d| d.reason).collect();
        assert_eq!(reasons, vec![DropReason::UnknownCriterion, DropReason::RejectedByVerifier]);
    }

    #[test]
    fn malformed_then_fixed_after_one_reprompt() {
        let (set, note) = liver_note();
        let client = FnClient::new(|req: &ChatRequest, n| {
            Ok(match n {
                0 => "I think INR".to_string(),
                1 => {
                    assert_eq!(req.messages.len(), 4);
                    r#"[{"criterion_id":"alf_inr","quote":"INR-1.6"}]"#.to_string()
                }
                _ => "[0]".to_string(),
            })
        });
        let out = annotate_evidence(&note, &set, &client, &AnnotatorConfig::default()).unwrap();
        assert_eq!(out.annotated.spans.len(), 1);
        assert_eq!(client.calls(), 3);
    }

    #[test]
    fn malformed_twice_fails() {
        let (set, note) = liver_note();
        let client = agent("no idea", "[]");
        let err = annotate_evidence(&note, &set, &client, &AnnotatorConfig::default()).unwrap_err();
        assert!(matches!(err, AnnotationError::MalformedAgentOutput { role: "extractor", .. }));
    }

    #[test]
    fn transport_failure_aborts() {
        let (set, note) = liver_note();
        let client = FnClient::new(|_: &ChatRequest, _| Err(GatewayError::Transport("down".into())));
        let err = annotate_evidence(&note, &set, &client, &AnnotatorConfig::default()).unwrap_err();
        assert!(matches!(err, AnnotationError::Transport(ref e) if e.is_transport()));
    }

    #[test]
    fn deterministic_with_fixed_replies() {
        let (set, note) = liver_note();
        let run = || {
            let client = agent(
                r#"[{"criterion_id":"alf_inr","quote":"INR-1.6"},{"criterion_id":"alf_enceph","quote":"Head CT showed diffuse cerebral edema"}]"#,
                "[1, 0]",
            );
            annotate_evidence(&note, &set, &client, &AnnotatorConfig::default()).unwrap()
        };
        assert_eq!(run(), run());
    }
}
