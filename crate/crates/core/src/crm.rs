//! Context-relevance baseline: each quote is profiled by the tf-idf vector of
//! all its training contexts, and a query is scored by cosine similarity to
//! every profile.
//!
//! Term weights are `tf * idf` with the smoothed
//! `idf(t) = ln((1 + n) / (1 + df(t))) + 1`, where `n` is the number of
//! non-empty profiles. Profiles and queries are L2-normalized.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::{ContextQuotePair, QuoteCatalog};
use crate::error::Result;
use crate::evaluate::QuoteScorer;
use crate::exec::Exec;
use crate::text::{normalized_units, Unit};
use crate::QuoteId;

/// Case-folded words for word-unit data; character bigrams for unsegmented
/// text.
pub fn terms(text: &str, unit: Unit) -> Vec<String> {
    let units: Vec<String> = normalized_units(text, unit).into_iter().filter(|u| !u.is_empty()).collect();
    match unit {
        Unit::Word => units,
        Unit::Char => {
            if units.len() == 1 {
                return units;
            }
            units.windows(2).map(|w| format!("{}{}", w[0], w[1])).collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrmModel {
    unit: Unit,
    ids: Vec<QuoteId>,
    vocab: HashMap<String, u32>,
    idf: Vec<f64>,
    /// term -> (quote position, normalized weight)
    postings: Vec<Vec<(u32, f64)>>,
    /// Non-zero profile terms per quote position.
    profiles: Vec<BTreeMap<u32, f64>>,
}

impl CrmModel {
    /// One profile per catalog quote; quotes without training pairs get the
    /// zero profile.
    pub fn build(catalog: &QuoteCatalog, train: &[ContextQuotePair], unit: Unit) -> Self {
        let ids = catalog.ids().to_vec();
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut tf: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); ids.len()];
        for pair in train {
            let Some(pos) = catalog.position(pair.quote_id) else {
                continue;
            };
            for side in [&pair.left, &pair.right] {
                for t in terms(side, unit) {
                    let next = vocab.len() as u32;
                    let id = *vocab.entry(t).or_insert(next);
                    *tf[pos].entry(id).or_default() += 1.0;
                }
            }
        }
        let n_docs = tf.iter().filter(|p| !p.is_empty()).count() as f64;
        let mut df = vec![0usize; vocab.len()];
        for p in &tf {
            for &t in p.keys() {
                df[t as usize] += 1;
            }
        }
        let idf: Vec<f64> = df.iter().map(|&d| ((1.0 + n_docs) / (1.0 + d as f64)).ln() + 1.0).collect();
        let mut postings = vec![Vec::new(); vocab.len()];
        let profiles: Vec<BTreeMap<u32, f64>> = tf
            .into_iter()
            .enumerate()
            .map(|(pos, counts)| {
                let mut w: BTreeMap<u32, f64> = counts.into_iter().map(|(t, c)| (t, c * idf[t as usize])).collect();
                let norm = w.values().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    w.values_mut().for_each(|x| *x /= norm);
                }
                for (&t, &x) in &w {
                    postings[t as usize].push((pos as u32, x));
                }
                w
            })
            .collect();
        CrmModel {
            unit,
            ids,
            vocab,
            idf,
            postings,
            profiles,
        }
    }

    pub fn profile(&self, quote: QuoteId) -> Option<&BTreeMap<u32, f64>> {
        let pos = self.ids.iter().position(|&q| q == quote)?;
        Some(&self.profiles[pos])
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocab.get(term).copied()
    }

    pub fn idf(&self, term: u32) -> f64 {
        self.idf[term as usize]
    }

    /// Cosine similarity of the query context to every profile, in catalog
    /// order. Query terms unseen in training still count toward its norm.
    pub fn scores(&self, left: &str, right: &str) -> Vec<f64> {
        let n_docs = self.profiles.iter().filter(|p| !p.is_empty()).count() as f64;
        let unseen_idf = (1.0 + n_docs).ln() + 1.0;
        let mut known: BTreeMap<u32, f64> = BTreeMap::new();
        let mut unseen: HashMap<String, f64> = HashMap::new();
        for side in [left, right] {
            for t in terms(side, self.unit) {
                match self.vocab.get(&t) {
                    Some(&id) => *known.entry(id).or_default() += 1.0,
                    None => *unseen.entry(t).or_default() += 1.0,
                }
            }
        }
        let mut norm2 = unseen.values().map(|c| (c * unseen_idf).powi(2)).sum::<f64>();
        for (t, c) in known.iter_mut() {
            *c *= self.idf[*t as usize];
            norm2 += *c * *c;
        }
        let mut out = vec![0.0; self.ids.len()];
        if norm2 == 0.0 {
            return out;
        }
        let norm = norm2.sqrt();
        for (t, w) in known {
            for &(pos, x) in &self.postings[t as usize] {
                out[pos as usize] += w / norm * x;
            }
        }
        // Round-off can push an exact match a hair above one.
        out.iter_mut().for_each(|s| *s = s.min(1.0));
        out
    }
}

impl QuoteScorer for CrmModel {
    fn name(&self) -> &str {
        "crm"
    }

    fn quote_ids(&self) -> &[QuoteId] {
        &self.ids
    }

    fn score(&self, contexts: &[(&str, &str)], exec: Exec) -> Result<Vec<Vec<f64>>> {
        Ok(exec.map(contexts, |(l, r)| self.scores(l, r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::tests::pair;
    use crate::ranker::top_k;
    use crate::text::PunctuationSplitter;

    fn catalog(n: u32) -> QuoteCatalog {
        QuoteCatalog::from_texts((0..n).map(|i| (QuoteId(i), format!("quote number {i}"))), &PunctuationSplitter).unwrap()
    }

    #[test]
    fn single_context_profile_support() {
        let m = CrmModel::build(&catalog(2), &[pair("a", "b", 0)], Unit::Word);
        let p = m.profile(QuoteId(0)).unwrap();
        let support: Vec<u32> = p.keys().copied().collect();
        assert_eq!(support, vec![m.term_id("a").unwrap(), m.term_id("b").unwrap()]);
        assert!(m.profile(QuoteId(1)).unwrap().is_empty());
    }

    #[test]
    fn weights_match_direct_tfidf() {
        let train = [pair("x x y", "", 0), pair("y z", "", 1), pair("z", "w", 1)];
        let m = CrmModel::build(&catalog(3), &train, Unit::Word);
        // Two non-empty profiles. q0: x:2, y:1. q1: y:1, z:2, w:1.
        let idf = |df: f64| ((1.0 + 2.0) / (1.0 + df)).ln() + 1.0;
        let raw = [("x", 2.0 * idf(1.0)), ("y", 1.0 * idf(2.0))];
        let norm = raw.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        let p = m.profile(QuoteId(0)).unwrap();
        for (t, v) in raw {
            assert!((p[&m.term_id(t).unwrap()] - v / norm).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_query_ranks_its_quote_first() {
        let train = [
            pair("the river flows", "to the sea", 2),
            pair("the sea is wide", "", 0),
            pair("river banks", "", 1),
        ];
        let m = CrmModel::build(&catalog(3), &train, Unit::Word);
        let s = m.scores("the river flows", "to the sea");
        assert!((s[2] - 1.0).abs() < 1e-12);
        let top = top_k(&s, m.quote_ids(), 1).unwrap();
        assert_eq!(top[0].quote_id, QuoteId(2));
        assert!(s.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn disjoint_query_scores_zero_and_ranks_by_id() {
        let m = CrmModel::build(&catalog(3), &[pair("a b", "", 2), pair("c", "", 1)], Unit::Word);
        let s = m.scores("zzz", "");
        assert_eq!(s, vec![0.0; 3]);
        let order: Vec<u32> = top_k(&s, m.quote_ids(), 3).unwrap().iter().map(|e| e.quote_id.0).collect();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn duplicating_contexts_changes_nothing() {
        let train = vec![pair("a b c", "d", 0), pair("b c", "e f", 1), pair("f g", "", 2)];
        let doubled: Vec<_> = train.iter().chain(train.iter()).cloned().collect();
        let m1 = CrmModel::build(&catalog(3), &train, Unit::Word);
        let m2 = CrmModel::build(&catalog(3), &doubled, Unit::Word);
        for q in [("a b", "f"), ("c e", ""), ("g", "d")] {
            let (s1, s2) = (m1.scores(q.0, q.1), m2.scores(q.0, q.1));
            for (a, b) in s1.iter().zip(&s2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn character_bigrams() {
        assert_eq!(terms("学而时", Unit::Char), vec!["学而", "而时"]);
        assert_eq!(terms("学", Unit::Char), vec!["学"]);
        assert_eq!(terms("The, END", Unit::Word), vec!["the", "end"]);
    }
}
