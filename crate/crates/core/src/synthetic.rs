//! Generated data with known ground truth.
//!
//! [`CorpusPlan`] plants catalog quotes into filler documents and records
//! where each citation went, so a mining run can be checked pair for pair.
//! [`toy_task`] builds a ready-split dataset in which every quote is named by
//! two concepts, contexts carry one synonym cue per concept, and a sememe
//! lexicon tags each synonym with its concept.

use std::collections::BTreeSet;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    split_dataset, write_quote_set, BuildConfig, ContextQuotePair, Dataset, DatasetMeta, Document,
    DocumentId, QuoteCatalog, Split, SplitRatios,
};
use crate::error::{Error, Result};
use crate::sememe::SememeLexicon;
use crate::text::{PunctuationSplitter, Unit};
use crate::QuoteId;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const SYLLABLES: u64 = 70;
const WORD_SPACE: u64 = SYLLABLES * SYLLABLES * SYLLABLES;

/// The `i`-th pseudo-word. Distinct `i` below 343000 give distinct words.
pub fn pseudo_word(i: u64) -> String {
    assert!(i < WORD_SPACE, "pseudo-word index {i} out of range");
    let mut n = (i * 7919 + 104_729) % WORD_SPACE;
    let mut out = String::with_capacity(6);
    for _ in 0..3 {
        let s = (n % SYLLABLES) as usize;
        n /= SYLLABLES;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
    }
    out
}

/// Hands out disjoint runs of pseudo-words.
#[derive(Debug, Default)]
struct WordPool {
    next: u64,
}

impl WordPool {
    fn take(&mut self, n: usize) -> Vec<String> {
        let out = (self.next..self.next + n as u64).map(pseudo_word).collect();
        self.next += n as u64;
        out
    }
}

fn sentence(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s.push('.');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub documents: usize,
    pub quotes: usize,
    pub sentences_per_quote: Range<usize>,
    pub words_per_sentence: Range<usize>,
    pub filler_vocab: usize,
    /// Filler tokens between (and around) citations.
    pub gap_tokens: Range<usize>,
    /// Quotes cited only 1 or 2 times.
    pub rare_quotes: usize,
    /// Quotes cited `frequent_count` times.
    pub frequent_quotes: usize,
    pub frequent_count: usize,
    /// Citation count range for the remaining quotes.
    pub occurrences: Range<usize>,
    /// Probability that a citation covers only part of its quote.
    pub partial_fraction: f64,
    /// Documents that repeat an earlier document verbatim.
    pub duplicate_documents: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            documents: 200,
            quotes: 50,
            sentences_per_quote: 1..4,
            words_per_sentence: 3..7,
            filler_vocab: 400,
            gap_tokens: 5..60,
            rare_quotes: 5,
            frequent_quotes: 5,
            frequent_count: 40,
            occurrences: 6..20,
            partial_fraction: 0.2,
            duplicate_documents: 10,
            seed: 0,
        }
    }
}

/// One citation placed by the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Planting {
    pub document_id: DocumentId,
    pub quote_id: QuoteId,
    /// Quote sentences cited.
    pub sentences: Range<usize>,
    /// Whitespace-token offsets of the citation in the document.
    pub span: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct CorpusPlan {
    pub catalog: QuoteCatalog,
    pub documents: Vec<Document>,
    pub plantings: Vec<Planting>,
}

impl CorpusPlan {
    pub fn generate(spec: &CorpusSpec) -> Result<Self> {
        if spec.rare_quotes + spec.frequent_quotes > spec.quotes {
            return Err(Error::Config("more rare and frequent quotes than quotes".into()));
        }
        if spec.duplicate_documents >= spec.documents {
            return Err(Error::Config("every document would be a duplicate".into()));
        }
        let empty = |r: &Range<usize>| r.is_empty();
        if empty(&spec.sentences_per_quote) || empty(&spec.words_per_sentence) || empty(&spec.gap_tokens) || empty(&spec.occurrences) {
            return Err(Error::Config("empty range in corpus spec".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut pool = WordPool::default();
        let filler = pool.take(spec.filler_vocab);

        let mut texts = Vec::with_capacity(spec.quotes);
        let mut sentences: Vec<Vec<String>> = Vec::with_capacity(spec.quotes);
        for i in 0..spec.quotes {
            let n = rng.random_range(spec.sentences_per_quote.clone());
            let sents: Vec<String> = (0..n)
                .map(|_| sentence(&pool.take(rng.random_range(spec.words_per_sentence.clone()))))
                .collect();
            texts.push((QuoteId(i as u32 * 3 + 1), sents.join(" ")));
            sentences.push(sents);
        }
        let catalog = QuoteCatalog::from_texts(texts, &PunctuationSplitter)?;

        let mut counts: Vec<usize> = (0..spec.quotes)
            .map(|_| rng.random_range(spec.occurrences.clone()))
            .collect();
        let mut roles: Vec<usize> = (0..spec.quotes).collect();
        roles.shuffle(&mut rng);
        for &q in &roles[..spec.rare_quotes] {
            counts[q] = rng.random_range(1..3);
        }
        for &q in &roles[spec.rare_quotes..spec.rare_quotes + spec.frequent_quotes] {
            counts[q] = spec.frequent_count;
        }

        let originals = spec.documents - spec.duplicate_documents;
        let mut per_doc: Vec<Vec<(usize, Range<usize>)>> = vec![Vec::new(); originals];
        for (q, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let n = sentences[q].len();
                let cited = if n > 1 && rng.random_bool(spec.partial_fraction) {
                    let start = rng.random_range(0..n);
                    let end = rng.random_range(start + 1..=n);
                    start..end
                } else {
                    0..n
                };
                per_doc[rng.random_range(0..originals)].push((q, cited));
            }
        }

        let mut documents = Vec::with_capacity(spec.documents);
        let mut plantings = Vec::new();
        let mut doc_plantings: Vec<Vec<Planting>> = Vec::with_capacity(originals);
        for (d, mut cites) in per_doc.into_iter().enumerate() {
            cites.shuffle(&mut rng);
            let id = DocumentId(d as u32);
            let mut tokens: Vec<String> = Vec::new();
            let mut placed = Vec::new();
            let gap = |rng: &mut ChaCha8Rng, tokens: &mut Vec<String>| {
                for _ in 0..rng.random_range(spec.gap_tokens.clone()) {
                    let mut w = filler.choose(rng).cloned().unwrap_or_default();
                    if rng.random_bool(0.05) {
                        w.push(',');
                    }
                    tokens.push(w);
                }
            };
            gap(&mut rng, &mut tokens);
            for (q, cited) in cites {
                let start = tokens.len();
                for s in &sentences[q][cited.clone()] {
                    tokens.extend(s.split_whitespace().map(str::to_string));
                }
                placed.push(Planting {
                    document_id: id,
                    quote_id: catalog.ids()[q],
                    sentences: cited,
                    span: start..tokens.len(),
                });
                gap(&mut rng, &mut tokens);
            }
            documents.push(Document {
                id,
                text: layout(&tokens, &mut rng),
            });
            plantings.extend(placed.iter().cloned());
            doc_plantings.push(placed);
        }
        for d in originals..spec.documents {
            let src = rng.random_range(0..originals);
            let id = DocumentId(d as u32);
            documents.push(Document {
                id,
                text: documents[src].text.clone(),
            });
            plantings.extend(doc_plantings[src].iter().map(|p| Planting {
                document_id: id,
                ..p.clone()
            }));
        }
        Ok(CorpusPlan {
            catalog,
            documents,
            plantings,
        })
    }

    /// The pairs a correct miner must produce with word windows of `window`,
    /// ordered by document and position.
    pub fn expected_pairs(&self, window: usize) -> Vec<ContextQuotePair> {
        self.plantings
            .iter()
            .map(|p| {
                let tokens: Vec<&str> = self.documents[p.document_id.0 as usize].text.split_whitespace().collect();
                let left_start = p.span.start.saturating_sub(window);
                let right_end = (p.span.end + window).min(tokens.len());
                ContextQuotePair {
                    left: tokens[left_start..p.span.start].join(" "),
                    right: tokens[p.span.end..right_end].join(" "),
                    quote_id: p.quote_id,
                    source_document_id: p.document_id,
                    split: Split::Unassigned,
                }
            })
            .collect()
    }

    /// Writes `quotes.jsonl` and one file per document under `corpus/`,
    /// named so that sorted order matches document ids.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let corpus = dir.join("corpus");
        fs::create_dir_all(&corpus).map_err(|e| Error::io(&corpus, e))?;
        write_quote_set(&dir.join("quotes.jsonl"), &self.catalog)?;
        for d in &self.documents {
            let path = corpus.join(format!("doc{:06}.txt", d.id.0));
            fs::write(&path, &d.text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Joins tokens with spaces, breaking lines now and then.
fn layout(tokens: &[String], rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(if rng.random_bool(0.08) { '\n' } else { ' ' });
        }
        out.push_str(t);
    }
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub quotes: usize,
    pub contexts: usize,
    pub concepts: usize,
    pub synonyms: usize,
    /// Concept-free words unique to each quote.
    pub quote_words: usize,
    /// Length of a word sequence every quote is built around.
    pub shared_words: usize,
    /// Filler words on each side of a context.
    pub side_words: Range<usize>,
    pub filler_vocab: usize,
    /// Minimum contexts per quote.
    pub min_contexts: usize,
    pub zero_shot_quotes: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            quotes: 50,
            contexts: 2000,
            concepts: 12,
            synonyms: 4,
            quote_words: 3,
            shared_words: 0,
            side_words: 6..14,
            filler_vocab: 300,
            min_contexts: 5,
            zero_shot_quotes: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyTask {
    pub dataset: Dataset,
    pub lexicon: SememeLexicon,
    /// The two concepts naming each quote, in catalog order.
    pub concepts: Vec<(usize, usize)>,
    /// Synonyms per concept.
    pub synonyms: Vec<Vec<String>>,
}

/// Builds the cue-retrieval task described in the module docs.
pub fn toy_task(spec: &ToySpec) -> Result<ToyTask> {
    let pairs_available = spec.concepts * spec.concepts.saturating_sub(1) / 2;
    if spec.quotes > pairs_available {
        return Err(Error::Config(format!(
            "{} quotes need more than {} concepts",
            spec.quotes, spec.concepts
        )));
    }
    if spec.synonyms == 0 || spec.side_words.is_empty() {
        return Err(Error::Config("toy task needs synonyms and a context length range".into()));
    }
    if spec.contexts < spec.quotes * spec.min_contexts {
        return Err(Error::Config("too few contexts for the per-quote minimum".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool = WordPool::default();
    let filler = pool.take(spec.filler_vocab);
    let synonyms: Vec<Vec<String>> = (0..spec.concepts).map(|_| pool.take(spec.synonyms)).collect();

    let mut all_pairs: Vec<(usize, usize)> = (0..spec.concepts)
        .flat_map(|a| (a + 1..spec.concepts).map(move |b| (a, b)))
        .collect();
    all_pairs.shuffle(&mut rng);
    let concepts: Vec<(usize, usize)> = all_pairs[..spec.quotes].to_vec();

    let shared = pool.take(spec.shared_words);
    let mut texts = Vec::with_capacity(spec.quotes);
    for (i, &(a, b)) in concepts.iter().enumerate() {
        let mut own = pool.take(spec.quote_words);
        own.push(synonyms[a].choose(&mut rng).cloned().unwrap_or_default());
        own.push(synonyms[b].choose(&mut rng).cloned().unwrap_or_default());
        own.shuffle(&mut rng);
        let mut words = shared.clone();
        for w in own {
            let at = rng.random_range(0..=words.len());
            words.insert(at, w);
        }
        texts.push((QuoteId(i as u32), sentence(&words)));
    }
    let catalog = QuoteCatalog::from_texts(texts, &PunctuationSplitter)?;

    // Popularity falls off with quote index, over a guaranteed minimum.
    let weights: Vec<f64> = (0..spec.quotes).map(|i| 1.0 / ((i + 1) as f64).sqrt()).collect();
    let total_w: f64 = weights.iter().sum();
    let mut counts = vec![spec.min_contexts; spec.quotes];
    for _ in 0..spec.contexts - spec.quotes * spec.min_contexts {
        let mut x = rng.random_range(0.0..total_w);
        let mut q = 0;
        while q + 1 < spec.quotes && x >= weights[q] {
            x -= weights[q];
            q += 1;
        }
        counts[q] += 1;
    }

    let mut pairs = Vec::with_capacity(spec.contexts);
    for (q, &count) in counts.iter().enumerate() {
        let (a, b) = concepts[q];
        for _ in 0..count {
            let mut left: Vec<String> = (0..rng.random_range(spec.side_words.clone()))
                .map(|_| filler.choose(&mut rng).cloned().unwrap_or_default())
                .collect();
            let mut right: Vec<String> = (0..rng.random_range(spec.side_words.clone()))
                .map(|_| filler.choose(&mut rng).cloned().unwrap_or_default())
                .collect();
            for c in [a, b] {
                let cue = synonyms[c].choose(&mut rng).cloned().unwrap_or_default();
                let side = if rng.random_bool(0.5) { &mut left } else { &mut right };
                let at = rng.random_range(0..=side.len());
                side.insert(at, cue);
            }
            pairs.push(ContextQuotePair {
                left: left.join(" "),
                right: right.join(" "),
                quote_id: QuoteId(q as u32),
                source_document_id: DocumentId(pairs.len() as u32),
                split: Split::Unassigned,
            });
        }
    }
    let config = BuildConfig {
        window: spec.side_words.end + 2,
        unit: Unit::Word,
        min_occurrences: 1,
        max_pairs_per_quote: spec.contexts,
        split_ratios: SplitRatios::default(),
        zero_shot_quotes: spec.zero_shot_quotes,
        seed: spec.seed,
    };
    let pairs = split_dataset(pairs, &config, &mut rng)?;

    let lexicon = SememeLexicon::from_entries(
        synonyms
            .iter()
            .enumerate()
            .flat_map(|(c, words)| words.iter().map(move |w| (w.clone(), [format!("concept{c}")]))),
    );
    Ok(ToyTask {
        dataset: Dataset {
            catalog,
            pairs,
            meta: DatasetMeta {
                unit: Unit::Word,
                window: config.window,
            },
        },
        lexicon,
        concepts,
        synonyms,
    })
}

/// Distinct words in a collection of texts; handy for vocabulary checks.
pub fn word_set<'a>(texts: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    texts
        .into_iter()
        .flat_map(|t| t.split_whitespace().map(|w| w.trim_matches('.').to_lowercase()))
        .collect()
}
