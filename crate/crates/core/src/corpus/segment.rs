use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Sentence,
    Paragraph,
}

impl std::str::FromStr for UnitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence" => Ok(UnitKind::Sentence),
            "paragraph" => Ok(UnitKind::Paragraph),
            other => Err(format!("unknown unit kind `{other}`")),
        }
    }
}

impl std::fmt::Display for UnitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UnitKind::Sentence => "sentence",
            UnitKind::Paragraph => "paragraph",
        })
    }
}

/// One co-occurrence window of a story.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextUnit {
    pub index: usize,
    pub kind: UnitKind,
    pub text: String,
    pub word_count: usize,
    /// Byte offset of `text` within the source.
    pub char_offset: usize,
}

impl TextUnit {
    fn new(index: usize, kind: UnitKind, text: &str, char_offset: usize) -> Self {
        TextUnit {
            index,
            kind,
            text: text.to_string(),
            word_count: text.split_whitespace().count(),
            char_offset,
        }
    }
}

/// Splits on blank lines; paragraphs are trimmed and never empty.
pub fn segment_paragraphs(text: &str) -> Vec<TextUnit> {
    paragraph_spans(text)
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| TextUnit::new(i, UnitKind::Paragraph, &text[start..end], start))
        .collect()
}

/// Byte spans of trimmed, non-empty paragraphs.
fn paragraph_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            if let Some(span) = current.take() {
                spans.push(span);
            }
            continue;
        }
        let end = start + line.trim_end().len();
        current = Some(match current {
            Some((s, _)) => (s, end),
            None => (start + (line.len() - line.trim_start().len()), end),
        });
    }
    spans.extend(current);
    spans
}

/// Rule-based sentence splitter.
///
/// A boundary falls after a run of `.`, `!` or `?` (plus any closing quotes or
/// brackets) when whitespace follows and the next character is uppercase, a
/// digit, or an opening quote or bracket. A single `.` after a listed
/// abbreviation, or after a lone capital initial when `initials` is set, does
/// not end a sentence. Paragraph breaks always end a sentence.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    pub abbreviations: BTreeSet<String>,
    pub initials: bool,
}

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "Mr", "Mrs", "Ms", "Dr", "St", "Jr", "Sr", "Rev", "Prof", "Gen", "Col", "Capt", "Lt", "Sgt",
    "Mt", "Messrs", "vs", "etc", "e.g", "i.e", "cf", "No",
];

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
            initials: true,
        }
    }
}

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201D}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201C}', '\u{2018}'];

impl SentenceSplitter {
    pub fn segment(&self, text: &str) -> Vec<TextUnit> {
        let mut units = Vec::new();
        for (p_start, p_end) in paragraph_spans(text) {
            let para = &text[p_start..p_end];
            let mut start = 0;
            for (end, next) in self.boundaries(para) {
                push_sentence(&mut units, text, p_start + start, p_start + end);
                start = next;
            }
            push_sentence(&mut units, text, p_start + start, p_end);
        }
        units
    }

    /// `(end_of_sentence, start_of_next)` byte positions within `para`.
    fn boundaries(&self, para: &str) -> Vec<(usize, usize)> {
        let chars: Vec<(usize, char)> = para.char_indices().collect();
        let mut out = Vec::new();
        let mut k = 0;
        while k < chars.len() {
            if !matches!(chars[k].1, '.' | '!' | '?') {
                k += 1;
                continue;
            }
            let run_start = k;
            while k < chars.len() && matches!(chars[k].1, '.' | '!' | '?') {
                k += 1;
            }
            let single_period = k - run_start == 1 && chars[run_start].1 == '.';
            while k < chars.len() && CLOSERS.contains(&chars[k].1) {
                k += 1;
            }
            let end = chars.get(k).map_or(para.len(), |c| c.0);
            if k >= chars.len() || !chars[k].1.is_whitespace() {
                continue;
            }
            let mut m = k;
            while m < chars.len() && chars[m].1.is_whitespace() {
                m += 1;
            }
            let Some(&(next_pos, next)) = chars.get(m) else {
                continue;
            };
            if !(next.is_uppercase() || next.is_ascii_digit() || OPENERS.contains(&next)) {
                continue;
            }
            if single_period && self.is_abbreviation(&para[..chars[run_start].0]) {
                continue;
            }
            out.push((end, next_pos));
            k = m;
        }
        out
    }

    /// Whether the word ending at `before` (just ahead of a period) suppresses a split.
    fn is_abbreviation(&self, before: &str) -> bool {
        let word = before
            .rsplit(char::is_whitespace)
            .next()
            .unwrap_or("")
            .trim_start_matches(OPENERS);
        if self.abbreviations.contains(word) {
            return true;
        }
        let mut cs = word.chars();
        self.initials && matches!((cs.next(), cs.next()), (Some(c), None) if c.is_uppercase())
    }
}

fn push_sentence(units: &mut Vec<TextUnit>, source: &str, start: usize, end: usize) {
    let raw = &source[start..end];
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return;
    }
    let offset = start + (raw.len() - raw.trim_start().len());
    units.push(TextUnit::new(units.len(), UnitKind::Sentence, trimmed, offset));
}

/// Sentence units using the default abbreviation list.
pub fn segment_sentences(text: &str) -> Vec<TextUnit> {
    SentenceSplitter::default().segment(text)
}

pub fn segment(text: &str, kind: UnitKind) -> Vec<TextUnit> {
    match kind {
        UnitKind::Sentence => segment_sentences(text),
        UnitKind::Paragraph => segment_paragraphs(text),
    }
}
