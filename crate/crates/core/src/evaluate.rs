//! Ranking evaluation shared by every scorer: the neural model, the tf-idf
//! baseline, a uniform random ranker and test oracles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::ContextQuotePair;
use crate::encoder::{DualEncoder, QuoteIndex};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::Metrics;
use crate::ranker::rank_at;
use crate::QuoteId;

const SCORE_CHUNK: usize = 256;

/// Anything that assigns a score to every catalog quote for a context.
pub trait QuoteScorer: Sync {
    fn name(&self) -> &str;

    /// Column order of `score`.
    fn quote_ids(&self) -> &[QuoteId];

    /// One row of scores per `(left, right)` context.
    fn score(&self, contexts: &[(&str, &str)], exec: Exec) -> Result<Vec<Vec<f64>>>;
}

/// Dot-product logits of a trained dual encoder against its quote index.
pub struct NeuralScorer<'a> {
    encoder: &'a DualEncoder,
    index: &'a QuoteIndex,
}

impl<'a> NeuralScorer<'a> {
    pub fn new(encoder: &'a DualEncoder, index: &'a QuoteIndex) -> Result<Self> {
        let current = encoder.fingerprint();
        if index.fingerprint != current {
            return Err(Error::StaleIndex {
                index: index.fingerprint.clone(),
                current,
            });
        }
        Ok(NeuralScorer { encoder, index })
    }
}

impl QuoteScorer for NeuralScorer<'_> {
    fn name(&self) -> &str {
        "dual-encoder"
    }

    fn quote_ids(&self) -> &[QuoteId] {
        &self.index.ids
    }

    fn score(&self, contexts: &[(&str, &str)], exec: Exec) -> Result<Vec<Vec<f64>>> {
        let c = self.encoder.encode_contexts(contexts, exec)?;
        c.outer_iter().map(|row| self.index.logits(ArrayView1::from(&row))).collect()
    }
}

/// Independent uniform scores per query, derived from the context text and
/// a seed so that reruns agree.
pub struct RandomScorer {
    ids: Vec<QuoteId>,
    seed: u64,
}

impl RandomScorer {
    pub fn new(ids: Vec<QuoteId>, seed: u64) -> Self {
        RandomScorer { ids, seed }
    }
}

impl QuoteScorer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn quote_ids(&self) -> &[QuoteId] {
        &self.ids
    }

    fn score(&self, contexts: &[(&str, &str)], _exec: Exec) -> Result<Vec<Vec<f64>>> {
        Ok(contexts
            .iter()
            .map(|(l, r)| {
                let mut h = Sha256::new();
                h.update(self.seed.to_le_bytes());
                h.update(l.as_bytes());
                h.update([0]);
                h.update(r.as_bytes());
                let digest = h.finalize();
                let mut seed = [0u8; 32];
                seed.copy_from_slice(&digest);
                let mut rng = ChaCha8Rng::from_seed(seed);
                self.ids.iter().map(|_| rng.random::<f64>()).collect()
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Full,
    /// The right context is dropped before encoding.
    LeftOnly,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Full => "full",
            EvalMode::LeftOnly => "left_only",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EvalMode::Full),
            "left_only" | "left" => Ok(EvalMode::LeftOnly),
            other => Err(Error::Config(format!("unknown evaluation mode {other:?} (full|left_only)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    /// Position of the pair within the evaluated split.
    pub query: usize,
    pub quote_id: QuoteId,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: String,
    pub mode: EvalMode,
    pub num_quotes: usize,
    pub metrics: Metrics,
    pub records: Vec<QueryRecord>,
}

impl EvalReport {
    pub fn ranks(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.rank).collect()
    }
}

/// Ranks the gold quote of every pair among all of the scorer's quotes.
pub fn evaluate(scorer: &dyn QuoteScorer, pairs: &[ContextQuotePair], mode: EvalMode, exec: Exec) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let ids = scorer.quote_ids();
    let position: BTreeMap<QuoteId, usize> = ids.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    let mut records = Vec::with_capacity(pairs.len());
    for (chunk_no, chunk) in pairs.chunks(SCORE_CHUNK).enumerate() {
        let contexts: Vec<(&str, &str)> = chunk
            .iter()
            .map(|p| {
                let right = match mode {
                    EvalMode::Full => p.right.as_str(),
                    EvalMode::LeftOnly => "",
                };
                (p.left.as_str(), right)
            })
            .collect();
        let scores = scorer.score(&contexts, exec)?;
        if scores.len() != chunk.len() {
            return Err(Error::Shape(format!("{} score rows for {} contexts", scores.len(), chunk.len())));
        }
        for (i, (pair, row)) in chunk.iter().zip(&scores).enumerate() {
            if row.len() != ids.len() {
                return Err(Error::Shape(format!("{} scores for {} quotes", row.len(), ids.len())));
            }
            if row.iter().any(|s| s.is_nan()) {
                return Err(Error::NonFinite("scores"));
            }
            let g = *position.get(&pair.quote_id).ok_or(Error::UnknownQuote(pair.quote_id))?;
            records.push(QueryRecord {
                query: chunk_no * SCORE_CHUNK + i,
                quote_id: pair.quote_id,
                rank: rank_at(row, ids, g),
            });
        }
    }
    let ranks: Vec<usize> = records.iter().map(|r| r.rank).collect();
    Ok(EvalReport {
        scorer: scorer.name().to_string(),
        mode,
        num_quotes: ids.len(),
        metrics: Metrics::from_ranks(&ranks)?,
        records,
    })
}

/// Bucket edges over training-set occurrence counts; bucket `i` is
/// `[edges[i], edges[i + 1])`, so `[0, 1)` isolates zero-shot quotes.
pub const DEFAULT_BUCKET_EDGES: [usize; 9] = [0, 1, 5, 10, 20, 50, 100, 150, 201];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub low: usize,
    pub high: usize,
    pub quotes: usize,
    pub queries: usize,
    /// `None` when no evaluated query falls in the bucket.
    pub mrr: Option<f64>,
    pub ndcg_at_5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBucketReport {
    pub edges: Vec<usize>,
    pub buckets: Vec<Bucket>,
}

pub fn frequency_buckets(
    report: &EvalReport,
    train_counts: &BTreeMap<QuoteId, usize>,
    edges: &[usize],
) -> Result<FrequencyBucketReport> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("bucket edges must be strictly increasing with at least two entries".into()));
    }
    let bucket_of = |count: usize| -> Result<usize> {
        if count < edges[0] || count >= *edges.last().unwrap() {
            return Err(Error::OutOfRange(format!("training count {count} outside bucket edges {edges:?}")));
        }
        Ok(edges.partition_point(|&e| e <= count) - 1)
    };
    let n = edges.len() - 1;
    let mut quotes = vec![0usize; n];
    for &count in train_counts.values() {
        quotes[bucket_of(count)?] += 1;
    }
    let mut ranks: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in &report.records {
        let count = *train_counts.get(&r.quote_id).ok_or(Error::UnknownQuote(r.quote_id))?;
        ranks[bucket_of(count)?].push(r.rank);
    }
    let buckets = (0..n)
        .map(|b| {
            let rs = &ranks[b];
            let (mrr, ndcg) = if rs.is_empty() {
                (None, None)
            } else {
                (
                    Some(crate::metrics::mrr(rs)?),
                    Some(crate::metrics::mean_ndcg_at_k(rs, 5)?),
                )
            };
            Ok(Bucket {
                low: edges[b],
                high: edges[b + 1],
                quotes: quotes[b],
                queries: rs.len(),
                mrr,
                ndcg_at_5: ndcg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyBucketReport {
        edges: edges.to_vec(),
        buckets,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{DocumentId, Split};

    /// Scores each quote by a fixed lookup keyed on the left context, so the
    /// planted gold always wins.
    pub(crate) struct OracleScorer {
        pub ids: Vec<QuoteId>,
        pub gold: BTreeMap<String, QuoteId>,
    }

    impl QuoteScorer for OracleScorer {
        fn name(&self) -> &str {
            "oracle"
        }

        fn quote_ids(&self) -> &[QuoteId] {
            &self.ids
        }

        fn score(&self, contexts: &[(&str, &str)], _exec: Exec) -> Result<Vec<Vec<f64>>> {
            Ok(contexts
                .iter()
                .map(|(l, _)| {
                    let g = self.gold.get(*l);
                    self.ids.iter().map(|id| if Some(id) == g { 1.0 } else { 0.0 }).collect()
                })
                .collect())
        }
    }

    pub(crate) fn pair(left: &str, right: &str, q: u32) -> ContextQuotePair {
        ContextQuotePair {
            left: left.into(),
            right: right.into(),
            quote_id: QuoteId(q),
            source_document_id: DocumentId(0),
            split: Split::Test,
        }
    }

    #[test]
    fn oracle_scores_perfectly() {
        let pairs: Vec<_> = (0..10).map(|i| pair(&format!("ctx {i}"), "", i % 4)).collect();
        let oracle = OracleScorer {
            ids: (0..4).map(QuoteId).collect(),
            gold: pairs.iter().map(|p| (p.left.clone(), p.quote_id)).collect(),
        };
        let r = evaluate(&oracle, &pairs, EvalMode::Full, Exec::Parallel).unwrap();
        assert_eq!(r.metrics.mrr, 1.0);
        assert_eq!(r.metrics.recall_at_1, 1.0);
        assert_eq!(r.records.len(), 10);
    }

    #[test]
    fn all_ties_rank_by_id() {
        // A scorer with constant scores ranks quote q at position q + 1.
        struct Flat(Vec<QuoteId>);
        impl QuoteScorer for Flat {
            fn name(&self) -> &str {
                "flat"
            }
            fn quote_ids(&self) -> &[QuoteId] {
                &self.0
            }
            fn score(&self, c: &[(&str, &str)], _: Exec) -> Result<Vec<Vec<f64>>> {
                Ok(vec![vec![0.0; self.0.len()]; c.len()])
            }
        }
        let flat = Flat((0..5).map(QuoteId).collect());
        let pairs = [pair("a", "b", 0), pair("a", "b", 3)];
        let r = evaluate(&flat, &pairs, EvalMode::Full, Exec::Sequential).unwrap();
        assert_eq!(r.ranks(), vec![1, 4]);
    }

    #[test]
    fn random_scorer_is_reproducible() {
        let s = RandomScorer::new((0..20).map(QuoteId).collect(), 7);
        let a = s.score(&[("x", "y"), ("x", "z")], Exec::Sequential).unwrap();
        let b = s.score(&[("x", "y"), ("x", "z")], Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn empty_split_and_unknown_gold() {
        let s = RandomScorer::new((0..3).map(QuoteId).collect(), 0);
        assert!(evaluate(&s, &[], EvalMode::Full, Exec::Sequential).is_err());
        assert!(matches!(
            evaluate(&s, &[pair("a", "", 9)], EvalMode::Full, Exec::Sequential),
            Err(Error::UnknownQuote(_))
        ));
    }

    #[test]
    fn left_only_drops_the_right_side() {
        struct RightSensitive(Vec<QuoteId>);
        impl QuoteScorer for RightSensitive {
            fn name(&self) -> &str {
                "right"
            }
            fn quote_ids(&self) -> &[QuoteId] {
                &self.0
            }
            fn score(&self, c: &[(&str, &str)], _: Exec) -> Result<Vec<Vec<f64>>> {
                Ok(c.iter().map(|(_, r)| if r.is_empty() { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect())
            }
        }
        let s = RightSensitive(vec![QuoteId(0), QuoteId(1)]);
        let pairs = [pair("l", "r", 1)];
        assert_eq!(evaluate(&s, &pairs, EvalMode::Full, Exec::Sequential).unwrap().ranks(), vec![1]);
        assert_eq!(evaluate(&s, &pairs, EvalMode::LeftOnly, Exec::Sequential).unwrap().ranks(), vec![2]);
    }

    fn report(records: &[(u32, usize)]) -> EvalReport {
        let records: Vec<QueryRecord> = records
            .iter()
            .enumerate()
            .map(|(i, &(q, rank))| QueryRecord {
                query: i,
                quote_id: QuoteId(q),
                rank,
            })
            .collect();
        let ranks: Vec<usize> = records.iter().map(|r| r.rank).collect();
        EvalReport {
            scorer: "t".into(),
            mode: EvalMode::Full,
            num_quotes: 4,
            metrics: Metrics::from_ranks(&ranks).unwrap(),
            records,
        }
    }

    #[test]
    fn buckets_partition_quotes_and_filter_queries() {
        let counts: BTreeMap<QuoteId, usize> = [(0, 0), (1, 3), (2, 7), (3, 60)]
            .into_iter()
            .map(|(q, c)| (QuoteId(q), c))
            .collect();
        let r = report(&[(0, 4), (1, 1), (1, 2), (3, 1)]);
        let b = frequency_buckets(&r, &counts, &DEFAULT_BUCKET_EDGES).unwrap();
        assert_eq!(b.buckets.iter().map(|x| x.quotes).sum::<usize>(), 4);
        assert_eq!(b.buckets[0].quotes, 1);
        assert_eq!(b.buckets[0].mrr, Some(0.25));
        assert_eq!(b.buckets[1].mrr, Some(0.75));
        assert_eq!(b.buckets[2].queries, 0);
        assert_eq!(b.buckets[2].mrr, None);
        assert_eq!(b.buckets[5].mrr, Some(1.0));

        let one = frequency_buckets(&r, &counts, &[0, 1000]).unwrap();
        assert_eq!(one.buckets[0].mrr, Some(r.metrics.mrr));
        assert_eq!(one.buckets[0].ndcg_at_5, Some(r.metrics.ndcg_at_5));
    }

    #[test]
    fn bucket_edge_errors() {
        let counts: BTreeMap<QuoteId, usize> = [(QuoteId(0), 500)].into_iter().collect();
        let r = report(&[(0, 1)]);
        assert!(frequency_buckets(&r, &counts, &DEFAULT_BUCKET_EDGES).is_err());
        assert!(frequency_buckets(&r, &counts, &[0, 0, 1000]).is_err());
        assert!(frequency_buckets(&r, &counts, &[0]).is_err());
    }
}
