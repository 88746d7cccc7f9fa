//! Ranking losses over dot-product scores, in `f64`.
//!
//! The pseudo-rank loss contrasts the gold quote against a sampled negative
//! set `N(q)`:
//!
//! ```text
//! p* = exp(q.c) / (exp(q.c) + sum_{q' in N(q)} exp(q'.c)),   L = -log p*
//! ```
//!
//! With `N(q)` equal to every other quote it is the full softmax
//! cross-entropy.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = logsumexp(scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

/// Cross-entropy of `scores` against index `gold`, with its gradient with
/// respect to the scores (`softmax - onehot`).
pub fn softmax_xent(scores: &[f64], gold: usize) -> Result<(f64, Vec<f64>)> {
    if gold >= scores.len() {
        return Err(Error::OutOfRange(format!("gold index {gold} of {} scores", scores.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let lse = logsumexp(scores);
    let mut grad: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
    grad[gold] -= 1.0;
    Ok((lse - scores[gold], grad))
}

fn scores_against(c: ArrayView1<'_, f64>, gold: ArrayView1<'_, f64>, negatives: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if gold.len() != c.len() || negatives.ncols() != c.len() {
        return Err(Error::Shape(format!(
            "context width {}, quote width {}, negative width {}",
            c.len(),
            gold.len(),
            negatives.ncols()
        )));
    }
    let mut scores = Vec::with_capacity(negatives.nrows() + 1);
    scores.push(gold.dot(&c));
    scores.extend(negatives.outer_iter().map(|n| n.dot(&c)));
    Ok(scores)
}

/// `p*` for a gold quote vector, a context vector and negative quote vectors
/// (one per row).
pub fn pseudo_rank_prob(gold: ArrayView1<'_, f64>, c: ArrayView1<'_, f64>, negatives: ArrayView2<'_, f64>) -> Result<f64> {
    let scores = scores_against(c, gold, negatives)?;
    Ok((scores[0] - logsumexp(&scores)).exp())
}

pub fn pseudo_rank_loss(gold: ArrayView1<'_, f64>, c: ArrayView1<'_, f64>, negatives: ArrayView2<'_, f64>) -> Result<f64> {
    let scores = scores_against(c, gold, negatives)?;
    Ok(logsumexp(&scores) - scores[0])
}

#[derive(Debug, Clone)]
pub struct PseudoRankGrad {
    pub loss: f64,
    pub d_context: Array1<f64>,
    pub d_gold: Array1<f64>,
    pub d_negatives: Array2<f64>,
}

pub fn pseudo_rank_loss_grad(
    gold: ArrayView1<'_, f64>,
    c: ArrayView1<'_, f64>,
    negatives: ArrayView2<'_, f64>,
) -> Result<PseudoRankGrad> {
    let scores = scores_against(c, gold, negatives)?;
    let (loss, g) = softmax_xent(&scores, 0)?;
    let mut d_context = gold.to_owned() * g[0];
    for (n, gi) in negatives.outer_iter().zip(&g[1..]) {
        d_context.scaled_add(*gi, &n);
    }
    let d_gold = c.to_owned() * g[0];
    let mut d_negatives = Array2::zeros(negatives.raw_dim());
    for (mut row, gi) in d_negatives.outer_iter_mut().zip(&g[1..]) {
        row.scaled_add(*gi, &c);
    }
    Ok(PseudoRankGrad {
        loss,
        d_context,
        d_gold,
        d_negatives,
    })
}

/// `-log softmax(Q c)[gold]` over every quote vector (rows of `quotes`).
pub fn full_softmax_loss(c: ArrayView1<'_, f64>, quotes: ArrayView2<'_, f64>, gold: usize) -> Result<f64> {
    if quotes.ncols() != c.len() {
        return Err(Error::Shape(format!("context width {} vs quote width {}", c.len(), quotes.ncols())));
    }
    let scores: Vec<f64> = quotes.dot(&c).to_vec();
    Ok(softmax_xent(&scores, gold)?.0)
}
