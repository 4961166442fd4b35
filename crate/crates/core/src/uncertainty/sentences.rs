/// Partitions `text` into sentence segments as char ranges.
///
/// A segment ends after a newline, or after `.`, `!` or `?` when the next
/// char is whitespace or the end of text; trailing whitespace belongs to the
/// segment it follows. Decimal points such as `INR-1.6` do not end a
/// sentence. Concatenating all segments reproduces `text`.
pub fn sentence_segments(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let ends = c == '\n'
            || (matches!(c, '.' | '!' | '?')
                && chars.get(i + 1).is_none_or(|n| n.is_whitespace()));
        i += 1;
        if ends {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            out.push((start, i));
            start = i;
        }
    }
    if start < chars.len() {
        out.push((start, chars.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::char_slice;

    fn pieces(text: &str) -> Vec<&str> {
        sentence_segments(text)
            .into_iter()
            .map(|(s, e)| char_slice(text, s, e).unwrap())
            .collect()
    }

    #[test]
    fn splits_on_terminators_and_newlines() {
        assert_eq!(
            pieces("Labs: INR-1.6 noted. CT done!\nPlan: monitor"),
            vec!["Labs: INR-1.6 noted. ", "CT done!\n", "Plan: monitor"]
        );
    }

    #[test]
    fn newline_without_terminator() {
        assert_eq!(pieces("a b\nc d."), vec!["a b\n", "c d."]);
    }

    #[test]
    fn empty_text() {
        assert!(sentence_segments("").is_empty());
    }

    #[test]
    fn segments_partition_text() {
        let t = "  One. Two?\n\nThree 3.5 units.Four";
        let joined: String = pieces(t).concat();
        assert_eq!(joined, t);
    }
}
