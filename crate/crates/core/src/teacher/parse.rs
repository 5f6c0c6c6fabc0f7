//! Teacher replies are JSON arrays of `{"label", "text"}` pairs. Offsets are
//! recovered by locating each passage in the source document, left to right,
//! after NFC normalization and whitespace collapsing on both sides. Stored
//! offsets always index the original text.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::canonical_combining_class;
use unicode_normalization::UnicodeNormalization;

use crate::scenario::ClinicalScenario;
use crate::span::SpanLabel;
use crate::text::CharIndex;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error_kind", content = "detail")]
pub enum TeacherParseError {
    #[error("reply is not a JSON array of label/text objects: {0}")]
    NotJson(String),
    #[error("unknown label \"{0}\"")]
    UnknownLabel(String),
    #[error("passage not found in document: \"{0}\"")]
    SegmentNotFound(String),
    #[error("located passages overlap: ({}, {}) and ({}, {})", .first.0, .first.1, .second.0, .second.1)]
    OverlapAfterLocation {
        first: (usize, usize),
        second: (usize, usize),
    },
}

impl TeacherParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            TeacherParseError::NotJson(_) => "NotJson",
            TeacherParseError::UnknownLabel(_) => "UnknownLabel",
            TeacherParseError::SegmentNotFound(_) => "SegmentNotFound",
            TeacherParseError::OverlapAfterLocation { .. } => "OverlapAfterLocation",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ReplyItem<'a> {
    label: std::borrow::Cow<'a, str>,
    text: std::borrow::Cow<'a, str>,
}

/// Remove a surrounding markdown code fence (with or without a language
/// tag), if there is one.
pub fn strip_code_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = match rest.find('\n') {
        Some(nl) => &rest[nl + 1..],
        None => rest,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// The canonical reply for `spans` over `text`: compact JSON, spans in
/// order, passages copied verbatim.
pub fn canonical_reply(text: &str, spans: &[SpanLabel]) -> String {
    let idx = CharIndex::new(text);
    let items: Vec<ReplyItem> = spans
        .iter()
        .map(|s| ReplyItem {
            label: s.label.as_str().into(),
            text: idx.slice(s.start, s.end).unwrap_or_default().into(),
        })
        .collect();
    serde_json::to_string(&items).expect("reply serializes")
}

/// Normalized view of a source text with a map back to original offsets.
struct Normalized {
    chars: Vec<char>,
    // original [start, end) scalar range of each normalized char
    origin: Vec<(usize, usize)>,
}

fn normalize_source(text: &str) -> Normalized {
    let src: Vec<char> = text.chars().collect();
    let mut chars = Vec::with_capacity(src.len());
    let mut origin = Vec::with_capacity(src.len());
    let mut i = 0;
    while i < src.len() {
        if src[i].is_whitespace() {
            let start = i;
            while i < src.len() && src[i].is_whitespace() {
                i += 1;
            }
            chars.push(' ');
            origin.push((start, i));
            continue;
        }
        // a starter plus its trailing combining marks normalizes as a unit
        let start = i;
        i += 1;
        while i < src.len() && canonical_combining_class(src[i]) != 0 {
            i += 1;
        }
        for c in src[start..i].iter().copied().nfc() {
            chars.push(c);
            origin.push((start, i));
        }
    }
    Normalized { chars, origin }
}

fn normalize_needle(s: &str) -> Vec<char> {
    let mut out = Vec::new();
    let mut in_space = false;
    for c in s.nfc() {
        if c.is_whitespace() {
            in_space = true;
        } else {
            if in_space && !out.is_empty() {
                out.push(' ');
            }
            in_space = false;
            out.push(c);
        }
    }
    out
}

fn find_from(hay: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()] == *needle)
}

fn prefix(s: &str) -> String {
    const MAX: usize = 40;
    let mut p: String = s.chars().take(MAX).collect();
    if s.chars().count() > MAX {
        p.push('…');
    }
    p
}

/// Parse a teacher reply into validated, ordered, non-overlapping spans.
///
/// Each passage is searched from the end of the previous match; a passage
/// that only occurs earlier is accepted when it does not overlap an
/// already-located span, and the result is sorted by start.
pub fn parse_teacher_output(
    raw: &str,
    scenario: &ClinicalScenario,
    source_text: &str,
) -> Result<Vec<SpanLabel>, TeacherParseError> {
    let body = strip_code_fence(raw);
    let items: Vec<ReplyItem> = serde_json::from_str(body).map_err(|e| TeacherParseError::NotJson(e.to_string()))?;
    for item in &items {
        if !scenario.has_label(&item.label) {
            return Err(TeacherParseError::UnknownLabel(item.label.to_string()));
        }
    }
    let hay = normalize_source(source_text);
    let mut located: Vec<(usize, usize, usize)> = Vec::with_capacity(items.len());
    let mut cursor = 0;
    for (n, item) in items.iter().enumerate() {
        let needle = normalize_needle(&item.text);
        let not_found = || TeacherParseError::SegmentNotFound(prefix(item.text.trim()));
        let at = match find_from(&hay.chars, &needle, cursor) {
            Some(at) => at,
            None => find_from(&hay.chars, &needle, 0).ok_or_else(not_found)?,
        };
        let (ns, ne) = (at, at + needle.len());
        if let Some(&(ps, pe, _)) = located.iter().find(|&&(s, e, _)| ns < e && s < ne) {
            let orig = |s: usize, e: usize| (hay.origin[s].0, hay.origin[e - 1].1);
            return Err(TeacherParseError::OverlapAfterLocation {
                first: orig(ps, pe),
                second: orig(ns, ne),
            });
        }
        located.push((ns, ne, n));
        cursor = cursor.max(ne);
    }
    located.sort_unstable();
    Ok(located
        .into_iter()
        .map(|(s, e, n)| SpanLabel::new(items[n].label.to_string(), hay.origin[s].0, hay.origin[e - 1].1))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests_support::radiology;
    use crate::text::slice_chars;
    use proptest::prelude::*;

    const DOC: &str = "Badanie mammograficzne. BIRADS 4 w prawej piersi. Przewody poszerzone.";

    #[test]
    fn single_segment_offsets() {
        let out = parse_teacher_output(r#"[{"label":"BIRADS","text":"BIRADS 4"}]"#, &radiology(), DOC).unwrap();
        assert_eq!(out, vec![SpanLabel::new("BIRADS", 24, 32)]);
        assert_eq!(slice_chars(DOC, 24, 32), Some("BIRADS 4"));
    }

    #[test]
    fn misspelled_label_rejected() {
        let err = parse_teacher_output(r#"[{"label":"BIRDAS","text":"BIRADS 4"}]"#, &radiology(), DOC).unwrap_err();
        assert_eq!(err, TeacherParseError::UnknownLabel("BIRDAS".into()));
    }

    #[test]
    fn overlapping_entries_rejected() {
        let raw = r#"[{"label":"BIRADS","text":"BIRADS 4 w prawej"},{"label":"RIGHT","text":"4 w prawej piersi"}]"#;
        let err = parse_teacher_output(raw, &radiology(), DOC).unwrap_err();
        assert_eq!(err.kind(), "OverlapAfterLocation");
    }

    #[test]
    fn missing_passage_and_prose() {
        let err = parse_teacher_output(r#"[{"label":"OTHER","text":"guz lity"}]"#, &radiology(), DOC).unwrap_err();
        assert_eq!(err, TeacherParseError::SegmentNotFound("guz lity".into()));
        let err = parse_teacher_output("Oto wynik: BIRADS 4", &radiology(), DOC).unwrap_err();
        assert_eq!(err.kind(), "NotJson");
        let err = parse_teacher_output(r#"{"label":"OTHER","text":"x"}"#, &radiology(), DOC).unwrap_err();
        assert_eq!(err.kind(), "NotJson");
    }

    #[test]
    fn code_fence_parses_like_unwrapped() {
        let plain = r#"[{"label":"BIRADS","text":"BIRADS 4"},{"label":"DUCT_DILATED","text":"Przewody poszerzone."}]"#;
        let oracle = parse_teacher_output(plain, &radiology(), DOC).unwrap();
        for wrapped in [
            format!("```json\n{plain}\n```"),
            format!("```\n{plain}\n```\n"),
            format!("  ```JSON\n{plain}```"),
        ] {
            assert_eq!(parse_teacher_output(&wrapped, &radiology(), DOC).unwrap(), oracle);
        }
    }

    #[test]
    fn whitespace_and_normalization_tolerated() {
        // decomposed "ó" (o + U+0301) and a doubled space in the source
        let doc = "Zmiana  w lo\u{301}zku.";
        let raw = r#"[{"label":"OTHER","text":"Zmiana w łóżku."}]"#;
        // source uses "lo\u{301}zku" while the reply has "łóżku": not equal after NFC
        assert_eq!(
            parse_teacher_output(raw, &radiology(), doc).unwrap_err().kind(),
            "SegmentNotFound"
        );
        let raw = "[{\"label\":\"OTHER\",\"text\":\"Zmiana w l\u{f3}zku.\"}]";
        let out = parse_teacher_output(raw, &radiology(), doc).unwrap();
        assert_eq!(out, vec![SpanLabel::new("OTHER", 0, 17)]);
        assert_eq!(slice_chars(doc, 0, 17), Some(doc));
    }

    #[test]
    fn repeated_passages_resolve_left_to_right() {
        let doc = "Bez zmian. Bez zmian.";
        let raw = r#"[{"label":"OTHER","text":"Bez zmian."},{"label":"OTHER","text":"Bez zmian."}]"#;
        let out = parse_teacher_output(raw, &radiology(), doc).unwrap();
        assert_eq!(
            out,
            vec![SpanLabel::new("OTHER", 0, 10), SpanLabel::new("OTHER", 11, 21)]
        );
        // a single passage always binds to its first occurrence
        let raw = r#"[{"label":"OTHER","text":"Bez zmian."}]"#;
        assert_eq!(parse_teacher_output(raw, &radiology(), doc).unwrap()[0].start, 0);
    }

    #[test]
    fn out_of_order_reply_is_sorted() {
        let raw = r#"[{"label":"DUCT_DILATED","text":"Przewody poszerzone."},{"label":"BIRADS","text":"BIRADS 4"}]"#;
        let out = parse_teacher_output(raw, &radiology(), DOC).unwrap();
        assert_eq!(out[0].label, "BIRADS");
        assert_eq!(out[1].label, "DUCT_DILATED");
    }

    fn arb_tiling() -> impl Strategy<Value = (String, Vec<SpanLabel>)> {
        let word = "[a-zęółśążźćń]{1,6}";
        let piece = (prop::collection::vec(word, 1..4), 0usize..6, any::<bool>());
        prop::collection::vec(piece, 1..6).prop_map(|pieces| {
            let labels = radiology().labels;
            let mut text = String::new();
            let mut spans = Vec::new();
            for (i, (words, l, keep)) in pieces.into_iter().enumerate() {
                if i > 0 {
                    text.push_str(if i % 2 == 0 { " " } else { "\n " });
                }
                let start = text.chars().count();
                text.push_str(&format!("{i}{}", words.join(" ")));
                let end = text.chars().count();
                if keep || spans.is_empty() {
                    spans.push(SpanLabel::new(labels[l].clone(), start, end));
                }
            }
            (text, spans)
        })
    }

    proptest! {
        #[test]
        fn parse_inverts_canonical_reply((text, spans) in arb_tiling()) {
            let raw = canonical_reply(&text, &spans);
            prop_assert_eq!(parse_teacher_output(&raw, &radiology(), &text).unwrap(), spans);
        }
    }
}
