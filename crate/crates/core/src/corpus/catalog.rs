use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::SentenceSplitter;
use crate::QuoteId;

/// A candidate quotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quote {
    pub id: QuoteId,
    pub text: String,
    /// Constituent sentences, in order. Never empty.
    pub sentences: Vec<String>,
}

impl Quote {
    pub fn new(id: QuoteId, text: impl Into<String>, splitter: &dyn SentenceSplitter) -> Self {
        let text = text.into();
        let sentences = splitter.split(&text);
        Quote {
            id,
            text,
            sentences,
        }
    }
}

/// The fixed universe of candidate quotes, kept sorted by id so that row `i`
/// of any quote matrix corresponds to `quotes()[i]`.
#[derive(Debug, Clone, Default)]
pub struct QuoteCatalog {
    quotes: Vec<Quote>,
    ids: Vec<QuoteId>,
    positions: HashMap<QuoteId, usize>,
}

impl QuoteCatalog {
    pub fn new(mut quotes: Vec<Quote>) -> Result<Self> {
        quotes.sort_by_key(|q| q.id);
        if let Some(w) = quotes.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateQuoteId(w[0].id));
        }
        let ids: Vec<QuoteId> = quotes.iter().map(|q| q.id).collect();
        let positions = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(QuoteCatalog {
            quotes,
            ids,
            positions,
        })
    }

    pub fn from_texts<I, S>(texts: I, splitter: &dyn SentenceSplitter) -> Result<Self>
    where
        I: IntoIterator<Item = (QuoteId, S)>,
        S: Into<String>,
    {
        Self::new(
            texts
                .into_iter()
                .map(|(id, t)| Quote::new(id, t, splitter))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    pub fn ids(&self) -> &[QuoteId] {
        &self.ids
    }

    pub fn get(&self, id: QuoteId) -> Option<&Quote> {
        self.position(id).map(|i| &self.quotes[i])
    }

    pub fn position(&self, id: QuoteId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn contains(&self, id: QuoteId) -> bool {
        self.positions.contains_key(&id)
    }

    /// Sub-catalog of the quotes in `keep`.
    pub fn retain(&self, keep: &BTreeSet<QuoteId>) -> QuoteCatalog {
        let quotes = self
            .quotes
            .iter()
            .filter(|q| keep.contains(&q.id))
            .cloned()
            .collect();
        QuoteCatalog::new(quotes).expect("subset of a valid catalog")
    }
}

#[derive(Serialize, Deserialize)]
struct QuoteRecord<'a> {
    id: i64,
    text: std::borrow::Cow<'a, str>,
}

#[derive(Debug)]
pub struct LoadedQuotes {
    pub catalog: QuoteCatalog,
    /// Lines whose text was empty (after trimming).
    pub skipped_empty: usize,
}

/// Reads a JSON Lines quote file (`{"id": int, "text": str}` per line).
pub fn load_quote_set(path: &Path, splitter: &dyn SentenceSplitter) -> Result<LoadedQuotes> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut quotes = Vec::new();
    let mut skipped_empty = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuoteRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let id = u32::try_from(rec.id)
            .map_err(|_| Error::parse(path, i + 1, format!("quote id {} out of range", rec.id)))?;
        let text = rec.text.trim();
        if text.is_empty() {
            skipped_empty += 1;
            log::warn!("{}:{}: skipping quote {id} with empty text", path.display(), i + 1);
            continue;
        }
        quotes.push(Quote::new(QuoteId(id), text, splitter));
    }
    if skipped_empty > 0 {
        log::warn!("{}: skipped {skipped_empty} empty quotes", path.display());
    }
    Ok(LoadedQuotes {
        catalog: QuoteCatalog::new(quotes)?,
        skipped_empty,
    })
}

pub fn write_quote_set(path: &Path, catalog: &QuoteCatalog) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for q in catalog.quotes() {
        let rec = QuoteRecord {
            id: q.id.0 as i64,
            text: q.text.as_str().into(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
