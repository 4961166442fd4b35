//! Answer grammar per subtask. Parsing never fails outright: an answer
//! the grammar cannot read yields `parse_ok = false` with the raw text kept.

use super::{ParsedPrediction, Subtask};
use crate::uncertainty::UncertaintyLabel;

pub fn parse_prediction(note_id: &str, raw: &str, subtask: Subtask) -> ParsedPrediction {
    let mut p = ParsedPrediction::failed(note_id, subtask, raw);
    match subtask {
        Subtask::DiseaseDiagnosis => p.diagnosis = diagnosis(raw),
        Subtask::DiagnosticExplanation => p.explanations = list(raw).filter(|l| !l.is_empty()),
        Subtask::UncertaintyRecognition => p.uncertainty_label = label(raw),
        Subtask::UncertaintyExplanation => {
            p.uncertainty_explanations = if is_none_answer(raw) {
                Some(Vec::new())
            } else {
                list(raw).filter(|l| !l.is_empty())
            }
        }
    }
    p.parse_ok = p.diagnosis.is_some()
        || p.explanations.is_some()
        || p.uncertainty_label.is_some()
        || p.uncertainty_explanations.is_some();
    p
}

fn diagnosis(raw: &str) -> Option<String> {
    let mut text = raw.trim_start();
    if text.get(..10).is_some_and(|p| p.eq_ignore_ascii_case("diagnosis:")) {
        text = &text[10..];
    }
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

fn label(raw: &str) -> Option<UncertaintyLabel> {
    let lower = raw.to_lowercase();
    if lower.contains("insufficient") {
        Some(UncertaintyLabel::InsufficientEvidence)
    } else if lower.contains("sufficient") {
        Some(UncertaintyLabel::SufficientEvidence)
    } else {
        None
    }
}

fn is_none_answer(raw: &str) -> bool {
    raw.trim().trim_end_matches('.').eq_ignore_ascii_case("none")
}

/// Quoted strings inside braces; else bullet or numbered lines; else every
/// non-empty line that is not a header ending in a colon.
fn list(raw: &str) -> Option<Vec<String>> {
    if raw.trim().is_empty() {
        return None;
    }
    if let (Some(open), Some(close)) = (raw.find('{'), raw.rfind('}')) {
        if open < close {
            let quoted = quoted_strings(&raw[open + 1..close]);
            if !quoted.is_empty() || raw[open + 1..close].trim().is_empty() {
                return Some(quoted);
            }
        }
    }
    let lines: Vec<&str> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let bullets: Vec<String> = lines.iter().filter_map(|l| strip_bullet(l)).map(str::to_string).collect();
    if !bullets.is_empty() {
        return Some(bullets);
    }
    Some(
        lines
            .into_iter()
            .filter(|l| !l.ends_with(':'))
            .map(str::to_string)
            .collect(),
    )
}

fn strip_bullet(line: &str) -> Option<&str> {
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return Some(rest.trim());
        }
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if rest.starts_with(char::is_whitespace) {
                return Some(rest.trim());
            }
        }
    }
    None
}

/// JSON string literals in `s`, tolerating curly quotes and unescaped
/// inner quotes as a model might produce.
fn quoted_strings(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(i) = rest.find(['"', '\u{201c}']) {
        let after = &rest[i..];
        if after.starts_with('\u{201c}') {
            let body = &after['\u{201c}'.len_utf8()..];
            let end = body.find('\u{201d}').unwrap_or(body.len());
            out.push(body[..end].to_string());
            rest = body.get(end + '\u{201d}'.len_utf8()..).unwrap_or("");
            continue;
        }
        let (value, used) = take_quoted(after);
        out.push(value);
        rest = &after[used..];
    }
    out
}

/// A quoted item at the start of `after`: a proper JSON literal when it is
/// one, else everything up to the first quote that closes the item.
fn take_quoted(after: &str) -> (String, usize) {
    if let Some(found) = json_literal(after) {
        return found;
    }
    for (j, _) in after[1..].match_indices('"') {
        let end = j + 1;
        let tail = after[end + 1..].trim_start();
        if tail.is_empty() || tail.starts_with(',') {
            return (after[1..end].to_string(), end + 1);
        }
    }
    (after[1..].to_string(), after.len())
}

/// Decodes the JSON string literal at the start of `s` when it is followed
/// by a list separator or the end, returning the value and bytes consumed.
fn json_literal(s: &str) -> Option<(String, usize)> {
    let bytes = s.as_bytes();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => {
                let tail = s[i + 1..].trim_start();
                if tail.is_empty() || tail.starts_with(',') {
                    return serde_json::from_str(&s[..=i]).ok().map(|v| (v, i + 1));
                }
                return None;
            }
            _ => i += 1,
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(raw: &str, t: Subtask) -> ParsedPrediction {
        parse_prediction("n1", raw, t)
    }

    #[test]
    fn explanation_block_from_figure() {
        let raw = r#"The below evidence support the diagnosis {"Head CT showed diffuse cerebral edema", "INR-1.6", "developed the symptoms for less than 7 weeks"}"#;
        let got = p(raw, Subtask::DiagnosticExplanation);
        assert!(got.parse_ok);
        assert_eq!(
            got.explanations.unwrap(),
            vec![
                "Head CT showed diffuse cerebral edema",
                "INR-1.6",
                "developed the symptoms for less than 7 weeks"
            ]
        );
    }

    #[test]
    fn recognition_labels() {
        assert_eq!(
            p("Sufficient information (Confident diagnosis)", Subtask::UncertaintyRecognition).uncertainty_label,
            Some(UncertaintyLabel::SufficientEvidence)
        );
        assert_eq!(
            p("INSUFFICIENT information", Subtask::UncertaintyRecognition).uncertainty_label,
            Some(UncertaintyLabel::InsufficientEvidence)
        );
        assert!(!p("maybe", Subtask::UncertaintyRecognition).parse_ok);
    }

    #[test]
    fn empty_input_fails_for_every_subtask() {
        for t in Subtask::ALL {
            let got = p("", t);
            assert!(!got.parse_ok);
            assert_eq!(got, ParsedPrediction::failed("n1", t, ""));
        }
    }

    #[test]
    fn diagnosis_prefix_and_lines() {
        assert_eq!(p("Diagnosis: Acute liver failure\nbecause...", Subtask::DiseaseDiagnosis).diagnosis.unwrap(), "Acute liver failure");
        assert_eq!(p("\n\n  Cirrhosis  \n", Subtask::DiseaseDiagnosis).diagnosis.unwrap(), "Cirrhosis");
        assert_eq!(p("diagnosis:\nHeart failure", Subtask::DiseaseDiagnosis).diagnosis.unwrap(), "Heart failure");
    }

    #[test]
    fn list_fallbacks() {
        let bullets = p("Evidence:\n- INR 1.6\n2) confusion\n* CT edema", Subtask::DiagnosticExplanation);
        assert_eq!(bullets.explanations.unwrap(), vec!["INR 1.6", "confusion", "CT edema"]);
        let plain = p("Lack of evidence on \"A\"\nLack of evidence on \"B\"", Subtask::UncertaintyExplanation);
        assert_eq!(
            plain.uncertainty_explanations.unwrap(),
            vec!["Lack of evidence on \"A\"", "Lack of evidence on \"B\""]
        );
        assert_eq!(p("None.", Subtask::UncertaintyExplanation).uncertainty_explanations, Some(vec![]));
        assert_eq!(p("None", Subtask::DiagnosticExplanation).explanations.unwrap(), vec!["None"]);
    }

    #[test]
    fn loose_quotes() {
        let got = p("{“INR-1.6”, \"said \"no\" to alcohol\"}", Subtask::DiagnosticExplanation);
        assert_eq!(got.explanations.unwrap(), vec!["INR-1.6", "said \"no\" to alcohol"]);
    }

    proptest! {
        #[test]
        fn never_panics_and_failure_means_empty(raw in "\\PC{0,80}", t in 0usize..4) {
            let got = parse_prediction("x", &raw, Subtask::ALL[t]);
            if !got.parse_ok {
                prop_assert!(got.diagnosis.is_none() && got.explanations.is_none());
                prop_assert!(got.uncertainty_label.is_none() && got.uncertainty_explanations.is_none());
            }
            prop_assert_eq!(got.raw, raw);
        }
    }
}
