//! Mining context–quote pairs from raw text.
//!
//! The pipeline is `load_quote_set` → [`QuoteMatcher`] over a corpus →
//! [`extract_context`] per occurrence → [`dedup_filter_cap`] →
//! [`split_dataset`]. [`build_dataset`] runs all of it.

mod catalog;
mod dataset;
mod reader;
mod scan;

pub use catalog::{load_quote_set, write_quote_set, LoadedQuotes, Quote, QuoteCatalog};
pub use dataset::{
    build_dataset, dedup_filter_cap, extract_context, split_dataset, BuildConfig, BuildReport,
    ContextQuotePair, Dataset, DatasetMeta, Split, SplitRatios,
};
pub use reader::{read_corpus, CorpusReader, DocMode};
pub use scan::{
    mine_pairs, scan_corpus, DocUnits, Document, DocumentId, MineOutput, QuoteMatcher,
    QuoteOccurrence, ScanOutput,
};
