use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::catalog::{load_quote_set, write_quote_set, QuoteCatalog};
use crate::corpus::scan::{mine_pairs, DocUnits, Document, DocumentId, QuoteMatcher, QuoteOccurrence};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::text::{PunctuationSplitter, Unit};
use crate::QuoteId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    Unassigned,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?} (train|valid|test)"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

/// One mined occurrence: the context window around a quote and its gold id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextQuotePair {
    pub left: String,
    pub right: String,
    pub quote_id: QuoteId,
    pub source_document_id: DocumentId,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// Accepts `8:1:1` style weights (normalized) or `0.8:0.1:0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad split ratios {s:?}")))?;
        let [a, b, c] = parts[..] else {
            return Err(Error::Config(format!("split ratios need three parts, got {s:?}")));
        };
        let total = a + b + c;
        if parts.iter().any(|&x| x < 0.0 || !x.is_finite()) || total <= 0.0 {
            return Err(Error::Config(format!("bad split ratios {s:?}")));
        }
        Ok(SplitRatios {
            train: a / total,
            valid: b / total,
            test: c / total,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Context window per side, in `unit`s.
    pub window: usize,
    pub unit: Unit,
    pub min_occurrences: usize,
    pub max_pairs_per_quote: usize,
    pub split_ratios: SplitRatios,
    pub zero_shot_quotes: usize,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            window: 40,
            unit: Unit::Word,
            min_occurrences: 5,
            max_pairs_per_quote: 200,
            split_ratios: SplitRatios::default(),
            zero_shot_quotes: 100,
            seed: 0,
        }
    }
}

impl BuildConfig {
    /// 50-character windows for unsegmented scripts.
    pub fn character_windows() -> Self {
        BuildConfig {
            window: 50,
            unit: Unit::Char,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_occurrences < 1 {
            return Err(Error::Config("min_occurrences must be at least 1".into()));
        }
        if self.max_pairs_per_quote < self.min_occurrences {
            return Err(Error::Config(format!(
                "max_pairs_per_quote ({}) must be >= min_occurrences ({})",
                self.max_pairs_per_quote, self.min_occurrences
            )));
        }
        let r = self.split_ratios;
        let sum = r.train + r.valid + r.test;
        if [r.train, r.valid, r.test].iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must be non-negative and sum to 1, got {r:?}")));
        }
        Ok(())
    }
}

/// Context windows around one occurrence. Windows stop at the document edges.
pub fn extract_context(doc: &Document, occurrence: &QuoteOccurrence, config: &BuildConfig) -> ContextQuotePair {
    let units = DocUnits::new(&doc.text, config.unit);
    extract_from_units(&units, occurrence, config.window, config.unit)
}

pub(crate) fn extract_from_units(
    units: &DocUnits<'_>,
    occ: &QuoteOccurrence,
    window: usize,
    unit: Unit,
) -> ContextQuotePair {
    let left_start = occ.span.start.saturating_sub(window);
    let right_end = (occ.span.end + window).min(units.len());
    ContextQuotePair {
        left: unit.join(units.slice(left_start..occ.span.start)),
        right: unit.join(units.slice(occ.span.end..right_end)),
        quote_id: occ.quote_id,
        source_document_id: occ.document_id,
        split: Split::Unassigned,
    }
}

#[derive(Debug, Clone)]
pub struct Filtered {
    pub pairs: Vec<ContextQuotePair>,
    pub catalog: QuoteCatalog,
    pub duplicates_removed: usize,
    pub dropped_quotes: Vec<QuoteId>,
    pub capped_quotes: Vec<QuoteId>,
}

/// Removes exact duplicate `(left, right, quote)` triples, drops quotes with
/// fewer than `min_occurrences` pairs and down-samples quotes above
/// `max_pairs_per_quote`. Surviving pairs keep their input order.
pub fn dedup_filter_cap<R: Rng>(
    pairs: Vec<ContextQuotePair>,
    catalog: &QuoteCatalog,
    config: &BuildConfig,
    rng: &mut R,
) -> Result<Filtered> {
    config.validate()?;
    let before = pairs.len();
    let mut seen: HashSet<(String, String, QuoteId)> = HashSet::with_capacity(pairs.len());
    let pairs: Vec<ContextQuotePair> = pairs
        .into_iter()
        .filter(|p| seen.insert((p.left.clone(), p.right.clone(), p.quote_id)))
        .collect();
    let duplicates_removed = before - pairs.len();

    let mut by_quote: BTreeMap<QuoteId, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_quote.entry(p.quote_id).or_default().push(i);
    }
    let mut keep = vec![false; pairs.len()];
    let mut dropped_quotes = Vec::new();
    let mut capped_quotes = Vec::new();
    let mut surviving = BTreeSet::new();
    for (quote, mut idx) in by_quote {
        if idx.len() < config.min_occurrences {
            dropped_quotes.push(quote);
            continue;
        }
        if idx.len() > config.max_pairs_per_quote {
            idx.shuffle(rng);
            idx.truncate(config.max_pairs_per_quote);
            capped_quotes.push(quote);
        }
        surviving.insert(quote);
        for i in idx {
            keep[i] = true;
        }
    }
    let pairs: Vec<ContextQuotePair> = pairs
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Filtered {
        pairs,
        catalog: catalog.retain(&surviving),
        duplicates_removed,
        dropped_quotes,
        capped_quotes,
    })
}

/// Assigns train/valid/test labels.
///
/// Every quote gets one valid and one test pair first, so all quotes appear in
/// both evaluation splits. `zero_shot_quotes` quotes, drawn uniformly, have all
/// their pairs alternated between valid and test; every other quote keeps at
/// least one training pair. The remaining pairs fill the global ratios.
pub fn split_dataset<R: Rng>(
    mut pairs: Vec<ContextQuotePair>,
    config: &BuildConfig,
    rng: &mut R,
) -> Result<Vec<ContextQuotePair>> {
    config.validate()?;
    let mut by_quote: BTreeMap<QuoteId, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_quote.entry(p.quote_id).or_default().push(i);
    }
    let too_small: Vec<QuoteId> = by_quote
        .iter()
        .filter(|(_, v)| v.len() < 2)
        .map(|(&q, _)| q)
        .collect();
    if !too_small.is_empty() {
        return Err(Error::InfeasibleSplit {
            reason: "quotes need at least 2 pairs to appear in both valid and test".into(),
            quotes: too_small,
        });
    }
    if config.zero_shot_quotes > 0 && config.zero_shot_quotes >= by_quote.len() {
        return Err(Error::InfeasibleSplit {
            reason: format!(
                "zero-shot count {} must be below the number of quotes ({})",
                config.zero_shot_quotes,
                by_quote.len()
            ),
            quotes: Vec::new(),
        });
    }

    let mut order: Vec<QuoteId> = by_quote.keys().copied().collect();
    order.shuffle(rng);
    let zero_shot: BTreeSet<QuoteId> = order[..config.zero_shot_quotes].iter().copied().collect();

    let short: Vec<QuoteId> = by_quote
        .iter()
        .filter(|(q, v)| !zero_shot.contains(q) && v.len() < 3)
        .map(|(&q, _)| q)
        .collect();
    if !short.is_empty() {
        return Err(Error::InfeasibleSplit {
            reason: "non-zero-shot quotes need at least 3 pairs (train, valid and test)".into(),
            quotes: short,
        });
    }

    let mut counts: HashMap<Split, usize> = HashMap::new();
    let mut pool: Vec<usize> = Vec::new();
    for (quote, mut idx) in by_quote {
        idx.shuffle(rng);
        if zero_shot.contains(&quote) {
            for (k, &i) in idx.iter().enumerate() {
                let s = if k % 2 == 0 { Split::Valid } else { Split::Test };
                pairs[i].split = s;
                *counts.entry(s).or_default() += 1;
            }
        } else {
            for (s, &i) in [Split::Valid, Split::Test, Split::Train].iter().zip(&idx) {
                pairs[i].split = *s;
                *counts.entry(*s).or_default() += 1;
            }
            pool.extend_from_slice(&idx[3..]);
        }
    }

    let total = pairs.len() as f64;
    let target = |r: f64| (total * r).round() as usize;
    let need_valid = target(config.split_ratios.valid).saturating_sub(counts.get(&Split::Valid).copied().unwrap_or(0));
    let need_test = target(config.split_ratios.test).saturating_sub(counts.get(&Split::Test).copied().unwrap_or(0));
    pool.shuffle(rng);
    for (k, &i) in pool.iter().enumerate() {
        pairs[i].split = if k < need_valid {
            Split::Valid
        } else if k < need_valid + need_test {
            Split::Test
        } else {
            Split::Train
        };
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub documents: usize,
    pub unreadable_documents: usize,
    pub occurrences: usize,
    pub duplicates_removed: usize,
    pub dropped_quotes: usize,
    pub capped_quotes: usize,
    pub quotes: usize,
    pub pairs: usize,
    pub train_pairs: usize,
    pub valid_pairs: usize,
    pub test_pairs: usize,
    pub zero_shot_quotes: Vec<QuoteId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub unit: Unit,
    pub window: usize,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        DatasetMeta {
            unit: Unit::Word,
            window: 40,
        }
    }
}

/// A split dataset together with the catalog of its quotes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub catalog: QuoteCatalog,
    pub pairs: Vec<ContextQuotePair>,
    pub meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct PairRecord<'a> {
    quote_id: QuoteId,
    left: std::borrow::Cow<'a, str>,
    right: std::borrow::Cow<'a, str>,
    split: Split,
}

pub const QUOTES_FILE: &str = "quotes.jsonl";
pub const PAIRS_FILE: &str = "dataset.jsonl";
pub const META_FILE: &str = "meta.json";

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ContextQuotePair> {
        self.pairs.iter().filter(move |p| p.split == split)
    }

    pub fn split_pairs(&self, split: Split) -> Vec<ContextQuotePair> {
        self.split(split).cloned().collect()
    }

    /// Number of training pairs per catalog quote (zero for zero-shot quotes).
    pub fn train_counts(&self) -> BTreeMap<QuoteId, usize> {
        let mut counts: BTreeMap<QuoteId, usize> = self.catalog.ids().iter().map(|&q| (q, 0)).collect();
        for p in self.split(Split::Train) {
            *counts.entry(p.quote_id).or_default() += 1;
        }
        counts
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_quote_set(&dir.join(QUOTES_FILE), &self.catalog)?;
        let path = dir.join(PAIRS_FILE);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        for p in &self.pairs {
            if p.split == Split::Unassigned {
                return Err(Error::Config("cannot save a dataset with unassigned pairs".into()));
            }
            let rec = PairRecord {
                quote_id: p.quote_id,
                left: p.left.as_str().into(),
                right: p.right.as_str().into(),
                split: p.split,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let meta_path = dir.join(META_FILE);
        fs::write(&meta_path, serde_json::to_string_pretty(&self.meta)? + "\n")
            .map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let catalog = load_quote_set(&dir.join(QUOTES_FILE), &PunctuationSplitter)?.catalog;
        let path = dir.join(PAIRS_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PairRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(&path, i + 1, e.to_string()))?;
            if !catalog.contains(rec.quote_id) {
                return Err(Error::parse(&path, i + 1, format!("quote {} not in catalog", rec.quote_id)));
            }
            pairs.push(ContextQuotePair {
                left: rec.left.into_owned(),
                right: rec.right.into_owned(),
                quote_id: rec.quote_id,
                source_document_id: DocumentId(0),
                split: rec.split,
            });
        }
        let meta_path = dir.join(META_FILE);
        let meta = match fs::read_to_string(&meta_path) {
            Ok(s) => serde_json::from_str(&s)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => DatasetMeta::default(),
            Err(e) => return Err(Error::io(meta_path, e)),
        };
        Ok(Dataset { catalog, pairs, meta })
    }
}

/// The whole builder: mine, dedup/filter/cap, split. Deterministic given
/// `config.seed`, independent of the execution policy.
pub fn build_dataset<I>(
    catalog: &QuoteCatalog,
    docs: I,
    config: &BuildConfig,
    exec: Exec,
) -> Result<(Dataset, BuildReport)>
where
    I: IntoIterator<Item = Result<Document>>,
{
    config.validate()?;
    let matcher = QuoteMatcher::new(catalog, config.unit)?;
    let mined = mine_pairs(docs, &matcher, config, exec);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let occurrences = mined.pairs.len();
    let filtered = dedup_filter_cap(mined.pairs, catalog, config, &mut rng)?;
    let pairs = split_dataset(filtered.pairs, config, &mut rng)?;

    let count = |s: Split| pairs.iter().filter(|p| p.split == s).count();
    let mut trained: HashSet<QuoteId> = HashSet::new();
    for p in pairs.iter().filter(|p| p.split == Split::Train) {
        trained.insert(p.quote_id);
    }
    let report = BuildReport {
        documents: mined.documents,
        unreadable_documents: mined.errors,
        occurrences,
        duplicates_removed: filtered.duplicates_removed,
        dropped_quotes: filtered.dropped_quotes.len(),
        capped_quotes: filtered.capped_quotes.len(),
        quotes: filtered.catalog.len(),
        pairs: pairs.len(),
        train_pairs: count(Split::Train),
        valid_pairs: count(Split::Valid),
        test_pairs: count(Split::Test),
        zero_shot_quotes: filtered
            .catalog
            .ids()
            .iter()
            .copied()
            .filter(|q| !trained.contains(q))
            .collect(),
    };
    let dataset = Dataset {
        catalog: filtered.catalog,
        pairs,
        meta: DatasetMeta {
            unit: config.unit,
            window: config.window,
        },
    };
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(q: u32, left: &str) -> ContextQuotePair {
        ContextQuotePair {
            left: left.to_string(),
            right: String::new(),
            quote_id: QuoteId(q),
            source_document_id: DocumentId(0),
            split: Split::Unassigned,
        }
    }

    fn catalog(n: u32) -> QuoteCatalog {
        QuoteCatalog::from_texts((0..n).map(|i| (QuoteId(i), format!("quote {i}"))), &PunctuationSplitter).unwrap()
    }

    fn config(min: usize, cap: usize, zero: usize) -> BuildConfig {
        BuildConfig {
            min_occurrences: min,
            max_pairs_per_quote: cap,
            zero_shot_quotes: zero,
            ..Default::default()
        }
    }

    #[test]
    fn ratios_parse_and_normalize() {
        let r: SplitRatios = "8:1:1".parse().unwrap();
        assert!((r.train - 0.8).abs() < 1e-12 && (r.valid - 0.1).abs() < 1e-12);
        assert!("8:1".parse::<SplitRatios>().is_err());
        assert!("8:-1:1".parse::<SplitRatios>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(config(0, 10, 0).validate().is_err());
        assert!(config(5, 4, 0).validate().is_err());
        assert!(config(5, 5, 0).validate().is_ok());
    }

    #[test]
    fn quote_below_min_occurrences_is_removed() {
        let mut pairs: Vec<_> = (0..4).map(|i| pair(0, &format!("a{i}"))).collect();
        pairs.extend((0..5).map(|i| pair(1, &format!("b{i}"))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = dedup_filter_cap(pairs, &catalog(2), &config(5, 200, 0), &mut rng).unwrap();
        assert_eq!(out.catalog.ids(), &[QuoteId(1)]);
        assert_eq!(out.pairs.len(), 5);
        assert_eq!(out.dropped_quotes, vec![QuoteId(0)]);
    }

    #[test]
    fn cap_keeps_exactly_max() {
        let pairs: Vec<_> = (0..250).map(|i| pair(0, &format!("c{i}"))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = dedup_filter_cap(pairs, &catalog(1), &config(5, 200, 0), &mut rng).unwrap();
        assert_eq!(out.pairs.len(), 200);
        assert_eq!(out.capped_quotes, vec![QuoteId(0)]);
    }

    #[test]
    fn identical_pairs_collapse() {
        let mut pairs: Vec<_> = (0..5).map(|i| pair(0, &format!("d{i}"))).collect();
        pairs.push(pair(0, "d0"));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = dedup_filter_cap(pairs, &catalog(1), &config(1, 200, 0), &mut rng).unwrap();
        assert_eq!(out.pairs.len(), 5);
        assert_eq!(out.duplicates_removed, 1);
    }

    #[test]
    fn empty_survivors_is_an_error() {
        let pairs = vec![pair(0, "x")];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = dedup_filter_cap(pairs, &catalog(1), &config(5, 200, 0), &mut rng).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    fn grid(quotes: u32, per: usize) -> Vec<ContextQuotePair> {
        (0..quotes)
            .flat_map(|q| (0..per).map(move |i| pair(q, &format!("q{q} c{i}"))))
            .collect()
    }

    #[test]
    fn ten_by_ten_with_one_zero_shot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = split_dataset(grid(10, 10), &config(1, 200, 1), &mut rng).unwrap();
        let mut splits: BTreeMap<QuoteId, BTreeSet<Split>> = BTreeMap::new();
        for p in &out {
            splits.entry(p.quote_id).or_default().insert(p.split);
        }
        let zero: Vec<_> = splits.iter().filter(|(_, s)| !s.contains(&Split::Train)).collect();
        assert_eq!(zero.len(), 1);
        assert_eq!(zero[0].1, &BTreeSet::from([Split::Valid, Split::Test]));
        let full = splits.values().filter(|s| s.len() == 3).count();
        assert_eq!(full, 9);
        assert!(out.iter().all(|p| p.split != Split::Unassigned));
    }

    #[test]
    fn zero_shot_zero_puts_every_quote_in_train() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = split_dataset(grid(6, 8), &config(1, 200, 0), &mut rng).unwrap();
        let trained: BTreeSet<_> = out.iter().filter(|p| p.split == Split::Train).map(|p| p.quote_id).collect();
        assert_eq!(trained.len(), 6);
    }

    #[test]
    fn single_pair_quote_is_infeasible() {
        let mut pairs = grid(3, 5);
        pairs.push(pair(9, "lonely"));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match split_dataset(pairs, &config(1, 200, 0), &mut rng).unwrap_err() {
            Error::InfeasibleSplit { quotes, .. } => assert_eq!(quotes, vec![QuoteId(9)]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn split_is_seed_deterministic_and_near_ratio() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            split_dataset(grid(20, 50), &config(1, 200, 2), &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
        let out = run(5);
        let train = out.iter().filter(|p| p.split == Split::Train).count() as f64;
        assert!((train / out.len() as f64 - 0.8).abs() < 0.03);
    }

    #[test]
    fn extraction_at_document_edges() {
        let doc = Document {
            id: DocumentId(4),
            text: "alpha beta gamma delta".into(),
        };
        let occ = QuoteOccurrence {
            quote_id: QuoteId(1),
            document_id: DocumentId(4),
            span: 0..2,
            sentences: 0..1,
        };
        let cfg = BuildConfig {
            window: 1,
            ..Default::default()
        };
        let p = extract_context(&doc, &occ, &cfg);
        assert_eq!(p.left, "");
        assert_eq!(p.right, "gamma");
        let occ = QuoteOccurrence { span: 2..3, ..occ };
        let cfg = BuildConfig {
            window: 2,
            ..Default::default()
        };
        let p = extract_context(&doc, &occ, &cfg);
        assert_eq!((p.left.as_str(), p.right.as_str()), ("alpha beta", "delta"));
    }

    #[test]
    fn saturated_windows_have_exactly_w_units() {
        let text: String = (0..100).map(|i| format!("w{i} ")).collect();
        let doc = Document {
            id: DocumentId(0),
            text,
        };
        let occ = QuoteOccurrence {
            quote_id: QuoteId(0),
            document_id: DocumentId(0),
            span: 50..53,
            sentences: 0..1,
        };
        let p = extract_context(&doc, &occ, &BuildConfig::default());
        assert_eq!(p.left.split_whitespace().count(), 40);
        assert_eq!(p.right.split_whitespace().count(), 40);
        assert!(p.left.starts_with("w10 ") && p.right.ends_with(" w92"));
    }

    #[test]
    fn character_windows() {
        let doc = Document {
            id: DocumentId(0),
            text: "甲乙丙丁戊己庚".into(),
        };
        let occ = QuoteOccurrence {
            quote_id: QuoteId(0),
            document_id: DocumentId(0),
            span: 3..4,
            sentences: 0..1,
        };
        let cfg = BuildConfig {
            window: 2,
            ..BuildConfig::character_windows()
        };
        let p = extract_context(&doc, &occ, &cfg);
        assert_eq!((p.left.as_str(), p.right.as_str()), ("乙丙", "戊己"));
    }
}
