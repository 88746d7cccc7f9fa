//! Rank-based retrieval metrics. Each query has exactly one relevant quote,
//! so every metric is a function of the gold quote's 1-based rank.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    if ranks.contains(&0) {
        return Err(Error::OutOfRange("ranks are 1-based".into()));
    }
    Ok(())
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    check(ranks)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// NDCG@K for a single relevant item: `1 / log2(rank + 1)` inside the
/// window, zero outside. The ideal DCG is 1, so no normalization is needed.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank == 0 || rank > k {
        return 0.0;
    }
    1.0 / ((rank + 1) as f64).log2()
}

pub fn mean_ndcg_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    check(ranks)?;
    Ok(ranks.iter().map(|&r| ndcg_at_k(r, k)).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of queries whose gold quote is in the top `k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    check(ranks)?;
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    /// Lower middle element for an even count.
    pub median: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn rank_stats(ranks: &[usize]) -> Result<RankStats> {
    check(ranks)?;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = ranks.len() as f64;
    let mean = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
    let var = ranks.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / n;
    Ok(RankStats {
        median: sorted[(sorted.len() - 1) / 2],
        mean,
        std: var.sqrt(),
    })
}

/// Every aggregate reported for an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub queries: usize,
    pub mrr: f64,
    pub ndcg_at_5: f64,
    pub recall_at_1: f64,
    pub recall_at_10: f64,
    pub recall_at_100: f64,
    pub median_rank: usize,
    pub mean_rank: f64,
    pub std_rank: f64,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let stats = rank_stats(ranks)?;
        Ok(Metrics {
            queries: ranks.len(),
            mrr: mrr(ranks)?,
            ndcg_at_5: mean_ndcg_at_k(ranks, 5)?,
            recall_at_1: recall_at_k(ranks, 1)?,
            recall_at_10: recall_at_k(ranks, 10)?,
            recall_at_100: recall_at_k(ranks, 100)?,
            median_rank: stats.median,
            mean_rank: stats.mean,
            std_rank: stats.std,
        })
    }
}
