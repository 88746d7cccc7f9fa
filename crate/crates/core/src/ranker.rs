//! Scoring every candidate quote for a context and ordering the result.
//!
//! Ordering is by descending score; equal scores are broken by ascending
//! quote id so rankings and metrics are reproducible.

use std::cmp::Ordering;
use std::path::Path;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_quote_set, write_quote_set, QuoteCatalog};
use crate::encoder::{DualEncoder, QuoteIndex};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::loss::softmax;
use crate::text::PunctuationSplitter;
use crate::QuoteId;

pub const CATALOG_FILE: &str = "quotes.jsonl";
pub const INDEX_FILE: &str = "quote_index.bin";

/// Normalized probabilities over the catalog, aligned with `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankScores {
    pub ids: Vec<QuoteId>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub quote_id: QuoteId,
    pub score: f64,
    pub rank: usize,
}

/// `softmax(Q c)`, refusing an index built by different quote-encoder weights.
pub fn rank_scores(context: ArrayView1<'_, f32>, index: &QuoteIndex, fingerprint: &str) -> Result<RankScores> {
    if index.fingerprint != fingerprint {
        return Err(Error::StaleIndex {
            index: index.fingerprint.clone(),
            current: fingerprint.to_string(),
        });
    }
    let logits = index.logits(context)?;
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("quote logits"));
    }
    Ok(RankScores {
        ids: index.ids.clone(),
        probs: softmax(&logits),
    })
}

/// "Ranks ahead of" order: higher score first, then lower id.
fn ahead(a: (f64, QuoteId), b: (f64, QuoteId)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn check(scores: &[f64], ids: &[QuoteId]) -> Result<()> {
    if scores.len() != ids.len() {
        return Err(Error::Shape(format!("{} scores for {} quotes", scores.len(), ids.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    Ok(())
}

/// The first `k` entries of the full tie-broken ordering.
pub fn top_k(scores: &[f64], ids: &[QuoteId], k: usize) -> Result<Vec<RankedEntry>> {
    check(scores, ids)?;
    if k == 0 || k > ids.len() {
        return Err(Error::OutOfRange(format!("k = {k} with {} quotes", ids.len())));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let cmp = |&a: &usize, &b: &usize| ahead((scores[a], ids[a]), (scores[b], ids[b]));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, j)| RankedEntry {
            quote_id: ids[j],
            score: scores[j],
            rank: i + 1,
        })
        .collect())
}

/// 1-based position of `gold` under the tie-broken ordering.
pub fn gold_rank(scores: &[f64], ids: &[QuoteId], gold: QuoteId) -> Result<usize> {
    check(scores, ids)?;
    let g = ids.iter().position(|&id| id == gold).ok_or(Error::UnknownQuote(gold))?;
    Ok(rank_at(scores, ids, g))
}

/// Rank of position `g`, without validation.
pub(crate) fn rank_at(scores: &[f64], ids: &[QuoteId], g: usize) -> usize {
    let key = (scores[g], ids[g]);
    1 + scores
        .iter()
        .zip(ids)
        .filter(|(&s, &id)| ahead((s, id), key) == Ordering::Less)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub quote_id: QuoteId,
    pub quote_text: String,
    pub score: f64,
    pub rank: usize,
}

/// A trained encoder with its quote index, ready to answer queries.
#[derive(Debug, Clone)]
pub struct Recommender {
    encoder: DualEncoder,
    catalog: QuoteCatalog,
    index: QuoteIndex,
    fingerprint: String,
}

impl Recommender {
    pub fn new(encoder: DualEncoder, catalog: QuoteCatalog, exec: Exec) -> Result<Self> {
        let index = encoder.build_quote_index(&catalog, exec)?;
        Self::with_index(encoder, catalog, index)
    }

    /// Uses a precomputed index, which must match the encoder and catalog.
    pub fn with_index(encoder: DualEncoder, catalog: QuoteCatalog, index: QuoteIndex) -> Result<Self> {
        let fingerprint = encoder.fingerprint();
        if index.fingerprint != fingerprint {
            return Err(Error::StaleIndex {
                index: index.fingerprint,
                current: fingerprint,
            });
        }
        if index.ids != catalog.ids() {
            return Err(Error::Shape("quote index rows do not match the catalog".into()));
        }
        Ok(Recommender {
            encoder,
            catalog,
            index,
            fingerprint,
        })
    }

    pub fn encoder(&self) -> &DualEncoder {
        &self.encoder
    }

    pub fn catalog(&self) -> &QuoteCatalog {
        &self.catalog
    }

    pub fn index(&self) -> &QuoteIndex {
        &self.index
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Writes the encoder checkpoint plus `quotes.jsonl` and `quote_index.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.encoder.save(dir)?;
        write_quote_set(&dir.join(CATALOG_FILE), &self.catalog)?;
        self.index.save(&dir.join(INDEX_FILE))
    }

    /// Loads a directory written by [`Recommender::save`]. A missing index is
    /// rebuilt; a present one must match the encoder.
    pub fn load(dir: &Path, exec: Exec) -> Result<Self> {
        let encoder = DualEncoder::load(dir)?;
        let catalog = load_quote_set(&dir.join(CATALOG_FILE), &PunctuationSplitter)?.catalog;
        let index_path = dir.join(INDEX_FILE);
        if index_path.exists() {
            Self::with_index(encoder, catalog, QuoteIndex::load(&index_path)?)
        } else {
            Self::new(encoder, catalog, exec)
        }
    }

    pub fn scores(&self, left: &str, right: &str) -> Result<RankScores> {
        let c = self.encoder.encode_context(left, right)?;
        rank_scores(ArrayView1::from(&c), &self.index, &self.fingerprint)
    }

    pub fn recommend(&self, left: &str, right: &str, k: usize) -> Result<Vec<Recommendation>> {
        let scores = self.scores(left, right)?;
        let k = k.min(scores.ids.len());
        top_k(&scores.probs, &scores.ids, k)?
            .into_iter()
            .map(|e| {
                let quote = self.catalog.get(e.quote_id).ok_or(Error::UnknownQuote(e.quote_id))?;
                Ok(Recommendation {
                    quote_id: e.quote_id,
                    quote_text: quote.text.clone(),
                    score: e.score,
                    rank: e.rank,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn ids(n: u32) -> Vec<QuoteId> {
        (0..n).map(QuoteId).collect()
    }

    fn index(m: Array2<f32>) -> QuoteIndex {
        QuoteIndex {
            ids: ids(m.nrows() as u32),
            matrix: m,
            fingerprint: "abc".into(),
        }
    }

    #[test]
    fn single_quote_has_probability_one() {
        let idx = index(array![[0.3, -2.0]]);
        let s = rank_scores(array![1.0f32, 1.0].view(), &idx, "abc").unwrap();
        assert_eq!(s.probs, vec![1.0]);
    }

    #[test]
    fn identical_rows_score_equally() {
        let idx = index(array![[0.3, -2.0], [0.3, -2.0], [1.0, 1.0]]);
        let s = rank_scores(array![0.5f32, 2.0].view(), &idx, "abc").unwrap();
        assert_eq!(s.probs[0], s.probs[1]);
        assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stale_index_is_refused() {
        let idx = index(array![[1.0, 0.0]]);
        assert!(matches!(
            rank_scores(array![1.0f32, 0.0].view(), &idx, "def"),
            Err(Error::StaleIndex { .. })
        ));
    }

    #[test]
    fn ties_go_to_the_lower_id() {
        let ids = vec![QuoteId(7), QuoteId(3), QuoteId(5)];
        let scores = [0.4, 0.4, 0.2];
        let top = top_k(&scores, &ids, 3).unwrap();
        let order: Vec<u32> = top.iter().map(|e| e.quote_id.0).collect();
        assert_eq!(order, vec![3, 7, 5]);
        assert_eq!(gold_rank(&scores, &ids, QuoteId(7)).unwrap(), 2);
        assert_eq!(gold_rank(&scores, &ids, QuoteId(3)).unwrap(), 1);
    }

    #[test]
    fn argument_errors() {
        let ids = ids(3);
        assert!(top_k(&[0.1, 0.2, 0.3], &ids, 0).is_err());
        assert!(top_k(&[0.1, 0.2, 0.3], &ids, 4).is_err());
        assert!(matches!(gold_rank(&[0.1, 0.2, 0.3], &ids, QuoteId(9)), Err(Error::UnknownQuote(_))));
        assert!(gold_rank(&[0.1, f64::NAN, 0.3], &ids, QuoteId(0)).is_err());
    }

    fn sorted_oracle(scores: &[f64], ids: &[QuoteId]) -> Vec<QuoteId> {
        // Insertion sort with an explicit comparison, independent of `ahead`.
        let mut out: Vec<(f64, QuoteId)> = Vec::new();
        for (&s, &id) in scores.iter().zip(ids) {
            let pos = out
                .iter()
                .position(|&(os, oid)| s > os || (s == os && id < oid))
                .unwrap_or(out.len());
            out.insert(pos, (s, id));
        }
        out.into_iter().map(|(_, id)| id).collect()
    }

    proptest! {
        #[test]
        fn top_k_is_a_prefix_of_the_full_sort(
            raw in prop::collection::vec(0u8..6, 1..40),
            k in 1usize..40,
        ) {
            let scores: Vec<f64> = raw.iter().map(|&r| r as f64 / 2.0).collect();
            let n = scores.len();
            // Ids deliberately out of positional order.
            let ids: Vec<QuoteId> = (0..n as u32).map(|i| QuoteId((i * 7919) % 1009)).collect();
            let k = k.min(n);
            let full = sorted_oracle(&scores, &ids);
            let top: Vec<QuoteId> = top_k(&scores, &ids, k).unwrap().iter().map(|e| e.quote_id).collect();
            prop_assert_eq!(&top[..], &full[..k]);
            for (pos, id) in full.iter().enumerate() {
                prop_assert_eq!(gold_rank(&scores, &ids, *id).unwrap(), pos + 1);
            }
        }

        #[test]
        fn shift_invariance(logits in prop::collection::vec(-5.0f64..5.0, 1..20), shift in -50.0f64..50.0) {
            let ids = ids(logits.len() as u32);
            let p = softmax(&logits);
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let k = logits.len();
            let a: Vec<_> = top_k(&logits, &ids, k).unwrap().iter().map(|e| e.quote_id).collect();
            let b: Vec<_> = top_k(&shifted, &ids, k).unwrap().iter().map(|e| e.quote_id).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn raising_a_logit_never_worsens_its_rank(
            logits in prop::collection::vec(-5.0f64..5.0, 2..20),
            which in 0usize..20,
            bump in 0.0f64..3.0,
        ) {
            let ids = ids(logits.len() as u32);
            let which = which % logits.len();
            let before = gold_rank(&logits, &ids, ids[which]).unwrap();
            let mut raised = logits.clone();
            raised[which] += bump;
            prop_assert!(gold_rank(&raised, &ids, ids[which]).unwrap() <= before);
        }

        #[test]
        fn probabilities_are_a_distribution(logits in prop::collection::vec(-30.0f64..30.0, 1..60)) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
