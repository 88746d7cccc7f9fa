//! Word → sememe-set knowledge base and the sememe fusion applied to quote
//! token embeddings.
//!
//! For a word `w` with sememe set `S(w)` split into tokens `x_1..x_n`, fusion
//! adds the scaled mean sememe embedding to every one of its tokens:
//!
//! ```text
//! x_i <- x_i + (alpha / |S(w)|) * sum_{s in S(w)} e_s
//! ```
//!
//! Tokens of unannotated words and special tokens are left untouched.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2, ArrayViewMut2, NdFloat};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::WordSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SememeId(pub u32);

/// Surface word → sememe set, plus the dense sememe inventory. Lookups are
/// case-folded; a word with several senses carries the union of their sememes.
#[derive(Debug, Clone, Default)]
pub struct SememeLexicon {
    words: HashMap<String, Vec<SememeId>>,
    inventory: Vec<String>,
    index: HashMap<String, SememeId>,
}

#[derive(Serialize, Deserialize)]
struct LexiconRecord {
    word: String,
    sememes: Vec<String>,
}

impl SememeLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a lexicon from `(word, sememes)` entries. Repeated words are
    /// merged by union. Sememe ids follow the sorted sememe names, so they do
    /// not depend on entry order.
    pub fn from_entries<W, I, S>(entries: impl IntoIterator<Item = (W, I)>) -> Self
    where
        W: AsRef<str>,
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut named: HashMap<String, BTreeSet<String>> = HashMap::new();
        for (word, sememes) in entries {
            let set: BTreeSet<String> = sememes.into_iter().map(|s| s.as_ref().to_string()).collect();
            if !set.is_empty() {
                named.entry(word.as_ref().to_lowercase()).or_default().extend(set);
            }
        }
        let inventory: Vec<String> = named
            .values()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<String, SememeId> = inventory
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), SememeId(i as u32)))
            .collect();
        let words = named
            .into_iter()
            .map(|(w, set)| (w, set.iter().map(|s| index[s]).collect()))
            .collect();
        SememeLexicon { words, inventory, index }
    }

    /// Loads a JSON Lines lexicon: `{"word": str, "sememes": [str]}` per line.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LexiconRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            entries.push((rec.word, rec.sememes));
        }
        Ok(Self::from_entries(entries))
    }

    /// Writes one line per word, sorted by word.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let sorted: BTreeMap<&String, &Vec<SememeId>> = self.words.iter().collect();
        for (word, ids) in sorted {
            let rec = LexiconRecord {
                word: word.clone(),
                sememes: ids.iter().map(|&s| self.inventory[s.0 as usize].clone()).collect(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Sememes of `word`; empty when the word is not annotated.
    pub fn sememes(&self, word: &str) -> &[SememeId] {
        let hit = self.words.get(word).or_else(|| {
            let folded = word.to_lowercase();
            if folded == word {
                None
            } else {
                self.words.get(&folded)
            }
        });
        hit.map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every annotated word with its sememes, in no particular order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[SememeId])> {
        self.words.iter().map(|(w, s)| (w.as_str(), s.as_slice()))
    }

    pub fn num_sememes(&self) -> usize {
        self.inventory.len()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn sememe_name(&self, id: SememeId) -> Option<&str> {
        self.inventory.get(id.0 as usize).map(String::as_str)
    }

    pub fn sememe_id(&self, name: &str) -> Option<SememeId> {
        self.index.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { alpha: 0.5 }
    }
}

impl FusionConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("sememe weight must be a finite non-negative number, got {alpha}")));
        }
        Ok(FusionConfig { alpha })
    }
}

/// Trainable sememe embeddings, one row per inventory entry.
#[derive(Debug, Clone)]
pub struct SememeTable<F> {
    pub weights: Array2<F>,
    pub trainable: bool,
}

impl<F: NdFloat> SememeTable<F> {
    pub fn random<R: Rng>(num_sememes: usize, width: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        let weights = Array2::from_shape_simple_fn((num_sememes, width), || F::from(normal.sample(rng)).unwrap());
        SememeTable {
            weights,
            trainable: true,
        }
    }
}

/// The per-sequence work list of a fusion: token ranges and their sememes,
/// resolved once so repeated forward passes skip the lexicon.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusionPlan {
    entries: Vec<(Range<usize>, Vec<SememeId>)>,
}

impl FusionPlan {
    /// Resolves `spans` against the lexicon. Spans must lie inside a sequence
    /// of `seq_len` positions.
    pub fn build(spans: &[WordSpan], lexicon: &SememeLexicon, seq_len: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for span in spans {
            if span.tokens.start > span.tokens.end || span.tokens.end > seq_len {
                return Err(Error::OutOfRange(format!(
                    "word {:?} spans tokens {:?} outside a sequence of {seq_len}",
                    span.word, span.tokens
                )));
            }
            let sememes = lexicon.sememes(&span.word);
            if !sememes.is_empty() && !span.tokens.is_empty() {
                entries.push((span.tokens.clone(), sememes.to_vec()));
            }
        }
        Ok(FusionPlan { entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same plan for a sequence placed `by` rows further down a packed batch.
    pub fn shifted(&self, by: usize) -> FusionPlan {
        FusionPlan {
            entries: self
                .entries
                .iter()
                .map(|(r, s)| (r.start + by..r.end + by, s.clone()))
                .collect(),
        }
    }

    fn check(&self, rows: usize, width: usize, table: &ArrayView2<'_, impl NdFloat>) -> Result<()> {
        if table.ncols() != width {
            return Err(Error::Shape(format!(
                "sememe table width {} does not match embedding width {width}",
                table.ncols()
            )));
        }
        for (r, s) in &self.entries {
            if r.end > rows {
                return Err(Error::OutOfRange(format!("token range {r:?} outside {rows} rows")));
            }
            if let Some(bad) = s.iter().find(|s| s.0 as usize >= table.nrows()) {
                return Err(Error::OutOfRange(format!("sememe {} outside table of {}", bad.0, table.nrows())));
            }
        }
        Ok(())
    }

    /// In-place fusion of `embeddings` (rows = token positions).
    pub fn apply<F: NdFloat>(&self, embeddings: &mut ArrayViewMut2<'_, F>, table: ArrayView2<'_, F>, alpha: F) -> Result<()> {
        self.check(embeddings.nrows(), embeddings.ncols(), &table)?;
        if alpha == F::zero() {
            return Ok(());
        }
        for (range, sememes) in &self.entries {
            let scale = alpha / F::from(sememes.len()).unwrap();
            let mut delta = ndarray::Array1::<F>::zeros(table.ncols());
            for s in sememes {
                delta += &table.row(s.0 as usize);
            }
            delta *= scale;
            for i in range.clone() {
                let mut row = embeddings.row_mut(i);
                row += &delta;
            }
        }
        Ok(())
    }

    /// Accumulates the gradient of the sememe table given the gradient of the
    /// fused embeddings.
    pub fn backward<F: NdFloat>(&self, d_embeddings: ArrayView2<'_, F>, alpha: F, d_table: &mut ArrayViewMut2<'_, F>) {
        if alpha == F::zero() {
            return;
        }
        for (range, sememes) in &self.entries {
            let scale = alpha / F::from(sememes.len()).unwrap();
            let mut g = ndarray::Array1::<F>::zeros(d_embeddings.ncols());
            for i in range.clone() {
                g += &d_embeddings.row(i);
            }
            g *= scale;
            for s in sememes {
                let mut row = d_table.row_mut(s.0 as usize);
                row += &g;
            }
        }
    }
}

/// Fused copy of `token_embeddings`.
pub fn fuse<F: NdFloat>(
    token_embeddings: &Array2<F>,
    word_spans: &[WordSpan],
    lexicon: &SememeLexicon,
    table: &SememeTable<F>,
    alpha: F,
) -> Result<Array2<F>> {
    let plan = FusionPlan::build(word_spans, lexicon, token_embeddings.nrows())?;
    let mut out = token_embeddings.clone();
    plan.apply(&mut out.view_mut(), table.weights.view(), alpha)?;
    Ok(out)
}
