//! Text units, match normalization and sentence splitting.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Granularity of context windows: whitespace-delimited words for
/// space-segmented languages, code points otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Word,
    Char,
}

impl Unit {
    /// Separator used when joining units back into a string.
    pub fn joiner(self) -> &'static str {
        match self {
            Unit::Word => " ",
            Unit::Char => "",
        }
    }

    pub fn join<'a>(self, units: impl IntoIterator<Item = &'a str>) -> String {
        let mut out = String::new();
        for (i, u) in units.into_iter().enumerate() {
            if i > 0 {
                out.push_str(self.joiner());
            }
            out.push_str(u);
        }
        out
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(Unit::Word),
            "char" => Ok(Unit::Char),
            other => Err(Error::Config(format!("unknown unit {other:?} (word|char)"))),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Word => "word",
            Unit::Char => "char",
        })
    }
}

const WIDE_PUNCT: &str = "“”‘’«»„‚‹›。，、；：？！…—–―·《》〈〉「」『』【】（）〔〕．～";
const SENTENCE_FINAL: &str = ".?!。？！…";
const CLOSERS: &str = "\"')]}”’»」』）】";

pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || WIDE_PUNCT.contains(c)
}

pub fn is_sentence_final(c: char) -> bool {
    SENTENCE_FINAL.contains(c)
}

fn is_closer(c: char) -> bool {
    CLOSERS.contains(c)
}

/// CJK ideographs and kana, which are treated as one word each.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

/// Byte ranges of the units of `text`.
pub fn unit_ranges(text: &str, unit: Unit) -> Vec<Range<usize>> {
    match unit {
        Unit::Word => {
            let mut out = Vec::new();
            let mut start = None;
            for (i, c) in text.char_indices() {
                if c.is_whitespace() {
                    if let Some(s) = start.take() {
                        out.push(s..i);
                    }
                } else if start.is_none() {
                    start = Some(i);
                }
            }
            if let Some(s) = start {
                out.push(s..text.len());
            }
            out
        }
        Unit::Char => text
            .char_indices()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, c)| i..i + c.len_utf8())
            .collect(),
    }
}

/// Case-fold and strip leading/trailing punctuation. Pure punctuation
/// normalizes to the empty string.
pub fn normalize_unit(unit: &str) -> String {
    unit.trim_matches(is_punct).to_lowercase()
}

/// Normalized, non-empty units of a sentence; the form used for matching.
pub fn normalized_units(text: &str, unit: Unit) -> Vec<String> {
    unit_ranges(text, unit)
        .into_iter()
        .map(|r| normalize_unit(&text[r]))
        .filter(|u| !u.is_empty())
        .collect()
}

/// True when a unit may sit between two consecutive quote sentences:
/// sentence-final punctuation and closing quotes only.
pub fn is_sentence_gap(unit: &str) -> bool {
    !unit.is_empty() && unit.chars().all(|c| is_sentence_final(c) || is_closer(c))
}

/// Collapse runs of whitespace into single spaces and trim.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits quote text into its constituent sentences.
pub trait SentenceSplitter: Send + Sync {
    /// Never empty for non-empty input.
    fn split(&self, text: &str) -> Vec<String>;
}

/// Terminal-punctuation splitter: a sentence ends after a run of `.?!` (or
/// their full-width forms) plus any closing quotes/brackets, when followed by
/// whitespace or the end of text. Full-width terminators need no whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct PunctuationSplitter;

impl SentenceSplitter for PunctuationSplitter {
    fn split(&self, text: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let (_, c) = chars[i];
            if !is_sentence_final(c) {
                i += 1;
                continue;
            }
            let wide = !c.is_ascii();
            let mut j = i + 1;
            while j < chars.len() && (is_sentence_final(chars[j].1) || is_closer(chars[j].1)) {
                j += 1;
            }
            let at_end = j == chars.len();
            if at_end || wide || chars[j].1.is_whitespace() {
                let end = if at_end { text.len() } else { chars[j].0 };
                let sentence = text[start..end].trim();
                if !sentence.is_empty() {
                    out.push(sentence.to_string());
                }
                start = end;
            }
            i = j;
        }
        let tail = text[start..].trim();
        if !tail.is_empty() {
            out.push(tail.to_string());
        }
        if out.is_empty() {
            out.push(text.trim().to_string());
        }
        out
    }
}
