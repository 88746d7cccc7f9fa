use std::cmp::Reverse;
use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};
use serde::{Deserialize, Serialize};

use crate::corpus::catalog::QuoteCatalog;
use crate::corpus::dataset::{extract_from_units, BuildConfig, ContextQuotePair};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::text::{is_sentence_gap, normalize_unit, normalized_units, unit_ranges, Unit};
use crate::QuoteId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocumentId(pub u32);

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "doc{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Document {
    pub id: DocumentId,
    pub text: String,
}

/// One maximal citation of a quote: its consecutive constituent sentences
/// found back to back in a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuoteOccurrence {
    pub quote_id: QuoteId,
    pub document_id: DocumentId,
    /// Unit offsets `[start, end)` within the document.
    pub span: Range<usize>,
    /// Index range into the quote's sentences.
    pub sentences: Range<usize>,
}

/// A document cut into context units.
pub struct DocUnits<'a> {
    pub text: &'a str,
    pub ranges: Vec<Range<usize>>,
}

impl<'a> DocUnits<'a> {
    pub fn new(text: &'a str, unit: Unit) -> Self {
        DocUnits {
            text,
            ranges: unit_ranges(text, unit),
        }
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn unit(&self, i: usize) -> &'a str {
        &self.text[self.ranges[i].clone()]
    }

    pub fn slice(&self, r: Range<usize>) -> impl Iterator<Item = &'a str> + '_ {
        r.map(move |i| self.unit(i))
    }
}

struct Pattern {
    units: usize,
    /// (catalog position, sentence index) pairs sharing this normalized text.
    owners: Vec<(u32, u32)>,
}

/// Multi-pattern matcher over the normalized constituent sentences of a
/// catalog. Each document is scanned in a single automaton pass.
pub struct QuoteMatcher {
    unit: Unit,
    automaton: AhoCorasick,
    patterns: Vec<Pattern>,
    quote_ids: Vec<QuoteId>,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    sentence: u32,
    start: usize,
    end: usize,
}

struct Candidate {
    quote: u32,
    sentences: Range<usize>,
    span: Range<usize>,
}

impl QuoteMatcher {
    pub fn new(catalog: &QuoteCatalog, unit: Unit) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut texts: Vec<String> = Vec::new();
        let mut patterns: Vec<Pattern> = Vec::new();
        for (qpos, quote) in catalog.quotes().iter().enumerate() {
            for (si, sentence) in quote.sentences.iter().enumerate() {
                let units = normalized_units(sentence, unit);
                if units.is_empty() {
                    continue;
                }
                let key = format!(" {} ", units.join(" "));
                let pid = *index.entry(key.clone()).or_insert_with(|| {
                    texts.push(key);
                    patterns.push(Pattern {
                        units: units.len(),
                        owners: Vec::new(),
                    });
                    patterns.len() - 1
                });
                patterns[pid].owners.push((qpos as u32, si as u32));
            }
        }
        let automaton = AhoCorasickBuilder::new()
            .match_kind(MatchKind::Standard)
            .build(&texts)
            .map_err(|e| Error::Config(format!("cannot build quote automaton: {e}")))?;
        Ok(QuoteMatcher {
            unit,
            automaton,
            patterns,
            quote_ids: catalog.ids().to_vec(),
        })
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn scan_document(&self, doc: &Document) -> Vec<QuoteOccurrence> {
        let units = DocUnits::new(&doc.text, self.unit);
        self.scan_units(doc.id, &units)
    }

    /// Occurrences in a pre-split document, ordered by span start.
    pub fn scan_units(&self, doc_id: DocumentId, units: &DocUnits<'_>) -> Vec<QuoteOccurrence> {
        // Haystack of the non-empty normalized units, each framed by spaces so
        // that patterns only match on unit boundaries.
        let mut kept: Vec<usize> = Vec::new();
        let mut starts: Vec<usize> = Vec::new();
        let mut hay = String::from(" ");
        for i in 0..units.len() {
            let norm = normalize_unit(units.unit(i));
            if norm.is_empty() {
                continue;
            }
            kept.push(i);
            starts.push(hay.len());
            hay.push_str(&norm);
            hay.push(' ');
        }
        if kept.is_empty() {
            return Vec::new();
        }

        let mut hits: HashMap<u32, Vec<Hit>> = HashMap::new();
        for m in self.automaton.find_overlapping_iter(&hay) {
            let pattern = &self.patterns[m.pattern().as_usize()];
            let Ok(first) = starts.binary_search(&(m.start() + 1)) else {
                continue;
            };
            for &(quote, sentence) in &pattern.owners {
                hits.entry(quote).or_default().push(Hit {
                    sentence,
                    start: first,
                    end: first + pattern.units,
                });
            }
        }

        let mut candidates = Vec::new();
        let mut quotes: Vec<u32> = hits.keys().copied().collect();
        quotes.sort_unstable();
        for quote in quotes {
            let mut list = hits.remove(&quote).unwrap_or_default();
            list.sort_by_key(|h| (h.start, h.sentence));
            self.chain(quote, &list, &kept, units, &mut candidates);
        }
        resolve_overlaps(candidates)
            .into_iter()
            .map(|c| QuoteOccurrence {
                quote_id: self.quote_ids[c.quote as usize],
                document_id: doc_id,
                span: c.span,
                sentences: c.sentences,
            })
            .collect()
    }

    /// Merge sentence hits of one quote into maximal runs of consecutive
    /// sentences separated only by sentence-boundary punctuation.
    fn chain(
        &self,
        quote: u32,
        hits: &[Hit],
        kept: &[usize],
        units: &DocUnits<'_>,
        out: &mut Vec<Candidate>,
    ) {
        struct Run {
            first_sentence: u32,
            last_sentence: u32,
            start: usize,
            end: usize,
        }
        let mut runs: Vec<Run> = Vec::new();
        // (kept end, expected next sentence) -> run index
        let mut open: HashMap<(usize, u32), usize> = HashMap::new();
        for h in hits {
            let extend = open.remove(&(h.start, h.sentence)).filter(|&ri| {
                let prev_last = kept[runs[ri].end - 1];
                let next_first = kept[h.start];
                (prev_last + 1..next_first).all(|u| is_sentence_gap(units.unit(u)))
            });
            let ri = match extend {
                Some(ri) => {
                    runs[ri].last_sentence = h.sentence;
                    runs[ri].end = h.end;
                    ri
                }
                None => {
                    runs.push(Run {
                        first_sentence: h.sentence,
                        last_sentence: h.sentence,
                        start: h.start,
                        end: h.end,
                    });
                    runs.len() - 1
                }
            };
            open.insert((h.end, h.sentence + 1), ri);
        }
        out.extend(runs.into_iter().map(|r| Candidate {
            quote,
            sentences: r.first_sentence as usize..r.last_sentence as usize + 1,
            span: kept[r.start]..kept[r.end - 1] + 1,
        }));
    }
}

/// Keep the occurrence with more sentences when two overlap, then the longer
/// span, then the earlier one. Nested matches lose to their container.
fn resolve_overlaps(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    candidates.sort_by_key(|c| {
        (
            Reverse(c.sentences.len()),
            Reverse(c.span.len()),
            c.span.start,
            c.quote,
        )
    });
    let mut accepted: Vec<Candidate> = Vec::new();
    for c in candidates {
        let clash = accepted
            .iter()
            .any(|a| a.span.start < c.span.end && c.span.start < a.span.end);
        if !clash {
            accepted.push(c);
        }
    }
    accepted.sort_by_key(|c| (c.span.start, c.quote));
    accepted
}

#[derive(Debug, Default)]
pub struct ScanOutput {
    pub occurrences: Vec<QuoteOccurrence>,
    pub documents: usize,
    /// Documents that could not be read.
    pub errors: usize,
}

const CHUNK: usize = 256;

/// Applies `f` to every readable document, fanning chunks out over `exec`.
/// Returns the flattened results in document order plus (documents, errors).
fn process_chunked<I, T, F>(docs: I, exec: Exec, f: F) -> (Vec<T>, usize, usize)
where
    I: IntoIterator<Item = Result<Document>>,
    T: Send,
    F: Fn(&Document) -> Vec<T> + Sync + Send,
{
    let mut results = Vec::new();
    let mut documents = 0;
    let mut errors = 0;
    let mut batch: Vec<Document> = Vec::with_capacity(CHUNK);
    let mut flush = |batch: &mut Vec<Document>, results: &mut Vec<T>| {
        documents += batch.len();
        for items in exec.map(batch, &f) {
            results.extend(items);
        }
        batch.clear();
    };
    for doc in docs {
        match doc {
            Ok(d) => {
                batch.push(d);
                if batch.len() == CHUNK {
                    flush(&mut batch, &mut results);
                }
            }
            Err(e) => {
                log::warn!("skipping unreadable document: {e}");
                errors += 1;
            }
        }
    }
    flush(&mut batch, &mut results);
    (results, documents, errors)
}

/// Scans every readable document; unreadable ones are skipped and counted.
/// Output is ordered by (document id, span start).
pub fn scan_corpus<I>(docs: I, matcher: &QuoteMatcher, exec: Exec) -> ScanOutput
where
    I: IntoIterator<Item = Result<Document>>,
{
    let (mut occurrences, documents, errors) =
        process_chunked(docs, exec, |d| matcher.scan_document(d));
    occurrences.sort_by_key(|o| (o.document_id, o.span.start, o.quote_id));
    ScanOutput {
        occurrences,
        documents,
        errors,
    }
}

#[derive(Debug, Default)]
pub struct MineOutput {
    /// Pairs in (document id, span start) order, split unassigned.
    pub pairs: Vec<ContextQuotePair>,
    pub documents: usize,
    pub errors: usize,
}

/// Scan and window extraction in one pass, so documents never need to be held
/// in memory beyond their chunk.
pub fn mine_pairs<I>(docs: I, matcher: &QuoteMatcher, config: &BuildConfig, exec: Exec) -> MineOutput
where
    I: IntoIterator<Item = Result<Document>>,
{
    let (pairs, documents, errors) = process_chunked(docs, exec, |d| {
        let units = DocUnits::new(&d.text, matcher.unit);
        matcher
            .scan_units(d.id, &units)
            .iter()
            .map(|o| extract_from_units(&units, o, config.window, config.unit))
            .collect()
    });
    MineOutput {
        pairs,
        documents,
        errors,
    }
}
