//! Word-piece tokenizer: case-folded words split greedily into the longest
//! vocabulary pieces, continuation pieces marked with `##`.
//!
//! Words are whitespace-separated runs; every punctuation mark and every CJK
//! character is a word of its own, so the same tokenizer serves both
//! languages.

use std::collections::HashMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::{is_cjk, is_punct};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;

pub const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

const MAX_WORD_CHARS: usize = 100;

/// A pre-tokenized word and the token positions it produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSpan {
    pub word: String,
    pub tokens: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub words: Vec<WordSpan>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Keeps the first `n` tokens, dropping words that would be cut.
    pub fn truncate_end(&mut self, n: usize) {
        if self.ids.len() <= n {
            return;
        }
        self.ids.truncate(n);
        self.words.retain(|w| w.tokens.end <= n);
    }

    /// Keeps the last `n` tokens, dropping words that would be cut.
    pub fn truncate_start(&mut self, n: usize) {
        let len = self.ids.len();
        if len <= n {
            return;
        }
        let cut = len - n;
        self.ids.drain(..cut);
        self.words.retain(|w| w.tokens.start >= cut);
        for w in &mut self.words {
            w.tokens = w.tokens.start - cut..w.tokens.end - cut;
        }
    }
}

/// Splits text into case-folded words.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
        } else if is_punct(c) || is_cjk(c) {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            words.push(c.to_lowercase().collect());
        } else {
            current.extend(c.to_lowercase());
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

impl Tokenizer {
    /// The vocabulary must start with the special tokens in their fixed order.
    pub fn from_vocab(vocab: Vec<String>) -> Result<Self> {
        if vocab.len() < SPECIALS.len() || vocab.iter().zip(SPECIALS).any(|(v, s)| v != s) {
            return Err(Error::Config(format!(
                "vocabulary must begin with {SPECIALS:?}"
            )));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {tok:?}")));
            }
        }
        Ok(Tokenizer { vocab, index })
    }

    /// Builds a vocabulary from training text: every character seen (as a word
    /// start and as a continuation), then whole words by descending frequency
    /// until `max_vocab` entries. Characters are always kept, so the cap can be
    /// exceeded when the alphabet alone is larger.
    pub fn train<'a>(texts: impl IntoIterator<Item = &'a str>, max_vocab: usize, min_frequency: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for w in pre_tokenize(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut chars = std::collections::BTreeSet::new();
        for w in counts.keys() {
            for (i, c) in w.chars().enumerate() {
                if i == 0 {
                    chars.insert(c.to_string());
                } else {
                    chars.insert(format!("##{c}"));
                }
            }
        }
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        vocab.extend(chars.iter().cloned());
        let mut words: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(w, &n)| n >= min_frequency && !chars.contains(*w) && w.chars().count() <= MAX_WORD_CHARS)
            .map(|(w, &n)| (w, n))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let room = max_vocab.saturating_sub(vocab.len());
        vocab.extend(words.into_iter().take(room).map(|(w, _)| w.clone()));
        Tokenizer::from_vocab(vocab).expect("trained vocabulary is well formed")
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        if let Some(&id) = self.index.get(word) {
            out.push(id);
            return;
        }
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(UNK);
            return;
        }
        let mark = out.len();
        let mut start = 0;
        let mut piece = String::new();
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let from = chars[start].0;
                let to = chars.get(end).map_or(word.len(), |c| c.0);
                piece.clear();
                if start > 0 {
                    piece.push_str("##");
                }
                piece.push_str(&word[from..to]);
                if let Some(&id) = self.index.get(&piece) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.truncate(mark);
                    out.push(UNK);
                    return;
                }
            }
        }
    }

    pub fn encode(&self, text: &str) -> Encoding {
        let mut enc = Encoding::default();
        for word in pre_tokenize(text) {
            let start = enc.ids.len();
            self.word_pieces(&word, &mut enc.ids);
            enc.words.push(WordSpan {
                word,
                tokens: start..enc.ids.len(),
            });
        }
        enc
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).unwrap_or("[UNK]");
            match tok.strip_prefix("##") {
                Some(rest) => out.push_str(rest),
                None => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        out
    }

    /// One token per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.vocab.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Tokenizer::from_vocab(text.lines().map(str::to_string).collect())
    }
}
