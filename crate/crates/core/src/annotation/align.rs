//! Mapping quotes back to character offsets in a note.
//!
//! Offsets count Unicode scalar values, not bytes.

/// Leftmost occurrence of `quote` in `text` as `(start, end)` char offsets.
///
/// Tries an exact match first, then a match where every whitespace run in
/// both strings is collapsed to one space; offsets of the second kind refer
/// to the original text, so the covered substring may differ from `quote`
/// in its whitespace.
pub fn align_quote(text: &str, quote: &str) -> Option<(usize, usize)> {
    if quote.is_empty() {
        return None;
    }
    if let Some(b) = text.find(quote) {
        let start = text[..b].chars().count();
        return Some((start, start + quote.chars().count()));
    }
    align_normalized(text, quote)
}

fn align_normalized(text: &str, quote: &str) -> Option<(usize, usize)> {
    let needle = collapse_whitespace(quote.trim());
    if needle.is_empty() {
        return None;
    }
    let mut haystack = String::with_capacity(text.len());
    // char offset in `text` for each char pushed to `haystack`
    let mut origin = Vec::with_capacity(text.len());
    let mut in_space = false;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if !in_space {
                haystack.push(' ');
                origin.push(i);
            }
            in_space = true;
        } else {
            haystack.push(c);
            origin.push(i);
            in_space = false;
        }
    }
    let b = haystack.find(&needle)?;
    let first = haystack[..b].chars().count();
    let last = first + needle.chars().count() - 1;
    Some((origin[first], origin[last] + 1))
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Substring of `text` between char offsets `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let b_start = indices.nth(start)?;
    let b_end = if end == start {
        b_start
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[b_start..b_end])
}
