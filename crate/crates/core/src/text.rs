//! Unicode scalar-value offsets.
//!
//! Every span in the crate indexes `char`s, never bytes, so that offsets
//! written by one component stay valid in every other one regardless of how
//! many bytes a diacritic takes.

/// Number of Unicode scalar values in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte-offset table for one text, allowing O(1) slicing by scalar offsets.
#[derive(Debug, Clone)]
pub struct CharIndex<'a> {
    text: &'a str,
    // byte offset of every char boundary, including the final one
    bounds: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bounds.push(text.len());
        Self { text, bounds }
    }

    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Slice by scalar offsets; `None` when the range is out of bounds or
    /// reversed.
    pub fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.len() {
            return None;
        }
        Some(&self.text[self.bounds[start]..self.bounds[end]])
    }

    /// Scalar offset of a byte offset that lies on a char boundary.
    pub fn char_offset_of_byte(&self, byte: usize) -> Option<usize> {
        self.bounds.binary_search(&byte).ok()
    }
}

/// Slice `text` by scalar offsets.
pub fn slice_chars(text: &str, start: usize, end: usize) -> Option<&str> {
    CharIndex::new(text).slice(start, end)
}

/// Sentence spans of `text` as scalar offsets.
///
/// A sentence ends after `.`, `?` or `!` when the next char is whitespace or
/// the end of text, and at every newline. Spans exclude surrounding
/// whitespace and include the terminator. Whitespace-only pieces are dropped.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut piece_start = 0;
    let push = |from: usize, to: usize, spans: &mut Vec<(usize, usize)>| {
        let mut s = from;
        let mut e = to;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push((s, e));
        }
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            push(piece_start, i, &mut spans);
            piece_start = i + 1;
        } else if matches!(c, '.' | '?' | '!') && chars.get(i + 1).is_none_or(|next| next.is_whitespace()) {
            push(piece_start, i + 1, &mut spans);
            piece_start = i + 1;
        }
        i += 1;
    }
    push(piece_start, chars.len(), &mut spans);
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_scalar_values_not_bytes() {
        let t = "Żółć w normie.";
        let idx = CharIndex::new(t);
        assert_eq!(idx.len(), 14);
        assert_eq!(idx.slice(0, 4), Some("Żółć"));
        assert_eq!(idx.slice(5, 14), Some("w normie."));
        assert_eq!(idx.slice(3, 15), None);
        assert_eq!(idx.slice(4, 3), None);
    }

    #[test]
    fn sentences_split_on_terminators_and_newlines() {
        let t = "Pierwsze zdanie. Drugie? Trzecie!\nCzwarte bez kropki\n\n  ";
        let spans = sentence_spans(t);
        let texts: Vec<_> = spans.iter().map(|&(s, e)| slice_chars(t, s, e).unwrap()).collect();
        assert_eq!(
            texts,
            vec!["Pierwsze zdanie.", "Drugie?", "Trzecie!", "Czwarte bez kropki"]
        );
    }

    #[test]
    fn decimal_points_do_not_split() {
        let t = "Zmiana 3.5 cm. Koniec.";
        let spans = sentence_spans(t);
        assert_eq!(spans, vec![(0, 14), (15, 22)]);
    }
}
