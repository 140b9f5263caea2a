//! Comparison selectors: seeded random, Okapi BM25 over raw text, and
//! cosine similarity over embeddings. All of them rank with the same
//! (score descending, id ascending) order as the kernel index.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{top_s_of, Neighbor};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParameter(format!(
                "BM25 needs k1 > 0 and 0 <= b <= 1, got k1={} b={}",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub struct Bm25Index {
    ids: Vec<u64>,
    term_freqs: Vec<HashMap<String, u32>>,
    doc_lens: Vec<f64>,
    avgdl: f64,
    doc_freq: HashMap<String, usize>,
    params: Bm25Params,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(ids: &[u64], texts: &[S], params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if ids.is_empty() || ids.len() != texts.len() {
            return Err(Error::Shape(format!("{} ids for {} texts", ids.len(), texts.len())));
        }
        let mut term_freqs = Vec::with_capacity(texts.len());
        let mut doc_lens = Vec::with_capacity(texts.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for text in texts {
            let tokens = tokenize(text.as_ref());
            doc_lens.push(tokens.len() as f64);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avgdl = doc_lens.iter().sum::<f64>() / doc_lens.len() as f64;
        Ok(Bm25Index {
            ids: ids.to_vec(),
            term_freqs,
            doc_lens,
            avgdl,
            doc_freq,
            params,
        })
    }

    /// ln((N − n + 0.5)/(n + 0.5) + 1)
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        let total = self.ids.len() as f64;
        ((total - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    /// Scores in corpus order. Repeated query terms count repeatedly.
    pub fn scores(&self, query: &str) -> Vec<Neighbor> {
        let query = tokenize(query);
        let idf: Vec<f64> = query.iter().map(|t| self.idf(t)).collect();
        let Bm25Params { k1, b } = self.params;
        (0..self.ids.len())
            .map(|d| {
                let len_ratio = if self.avgdl > 0.0 { self.doc_lens[d] / self.avgdl } else { 1.0 };
                let norm = k1 * (1.0 - b + b * len_ratio);
                let score = query
                    .iter()
                    .zip(&idf)
                    .map(|(t, idf)| {
                        let tf = self.term_freqs[d].get(t).copied().unwrap_or(0) as f64;
                        idf * tf * (k1 + 1.0) / (tf + norm)
                    })
                    .sum();
                Neighbor { id: self.ids[d], score }
            })
            .collect()
    }

    pub fn select(&self, query: &str, s: usize) -> Result<Vec<Neighbor>> {
        top_s_of(self.scores(query), s)
    }
}

pub fn bm25_select<S: AsRef<str>>(ids: &[u64], texts: &[S], query: &str, params: Bm25Params, s: usize) -> Result<Vec<Neighbor>> {
    Bm25Index::new(ids, texts, params)?.select(query, s)
}

/// Seeded uniform keys, one per id; ranking by them is a uniform random
/// order.
pub fn random_scores(ids: &[u64], seed: u64) -> Vec<Neighbor> {
    let mut rng = seed::rng(seed);
    ids.iter()
        .map(|&id| Neighbor {
            id,
            score: rng.random::<f64>(),
        })
        .collect()
}

/// `s` ids drawn uniformly without replacement.
pub fn random_select(ids: &[u64], s: usize, seed: u64) -> Result<Vec<u64>> {
    Ok(top_s_of(random_scores(ids, seed), s)?.into_iter().map(|n| n.id).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

pub fn cosine_scores<E: AsRef<[f64]>>(ids: &[u64], embeddings: &[E], query: &[f64]) -> Result<Vec<Neighbor>> {
    ids.iter()
        .zip(embeddings)
        .map(|(&id, e)| Ok(Neighbor { id, score: cosine(query, e.as_ref())? }))
        .collect()
}

pub fn cosine_select<E: AsRef<[f64]>>(ids: &[u64], embeddings: &[E], query: &[f64], s: usize) -> Result<Vec<Neighbor>> {
    top_s_of(cosine_scores(ids, embeddings, query)?, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Good film, but VERY glum."), ["good", "film", "but", "very", "glum"]);
        assert!(tokenize(" ,.! ").is_empty());
    }

    #[test]
    fn bm25_absent_term_contributes_nothing() {
        let idx = Bm25Index::new(&[0, 1], &["a b", "b c"], Bm25Params::default()).unwrap();
        let with = idx.scores("b zzz");
        let without = idx.scores("b");
        assert_eq!(with, without);
    }

    #[test]
    fn bm25_single_document_hand_value() {
        let doc = "great food great";
        let idx = Bm25Index::new(&[9], &[doc], Bm25Params::default()).unwrap();
        let score = idx.scores(doc)[0].score;
        // N = 1, n = 1 for both terms; |d| = avgdl.
        let idf = (0.5f64 / 1.5 + 1.0).ln();
        let term = |tf: f64| idf * tf * 2.5 / (tf + 1.5);
        let expected = term(2.0) + term(1.0) + term(2.0);
        assert_relative_eq!(score, expected, max_relative = 1e-15);
    }

    #[test]
    fn bm25_duplicates_tie_and_order_is_irrelevant() {
        let texts = ["the cat sat", "a dog ran", "the cat sat", "cat cat"];
        let idx = Bm25Index::new(&[0, 1, 2, 3], &texts, Bm25Params::default()).unwrap();
        let s = idx.scores("cat sat");
        assert_eq!(s[0].score, s[2].score);
        let rev: Vec<&str> = texts.iter().rev().copied().collect();
        let idx_rev = Bm25Index::new(&[3, 2, 1, 0], &rev, Bm25Params::default()).unwrap();
        let mut a = idx.select("cat sat", 4).unwrap();
        let b = idx_rev.select("cat sat", 4).unwrap();
        assert_eq!(a, b);
        a.truncate(1);
        assert_eq!(a[0].id, 0);
    }

    #[test]
    fn bm25_empty_query_ranks_by_id() {
        let idx = Bm25Index::new(&[5, 2, 7], &["x", "y", "z"], Bm25Params::default()).unwrap();
        let ids: Vec<u64> = idx.select("", 3).unwrap().iter().map(|n| n.id).collect();
        assert_eq!(ids, [2, 5, 7]);
    }

    #[test]
    fn random_selection() {
        let ids: Vec<u64> = (0..10).collect();
        let mut all = random_select(&ids, 10, 4).unwrap();
        assert_eq!(random_select(&ids, 10, 4).unwrap(), all);
        all.sort();
        assert_eq!(all, ids);
        assert_eq!(random_select(&[42], 1, 0).unwrap(), vec![42]);
        assert!(random_select(&ids, 11, 0).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_relative_eq!(cosine(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let h = 1.0 / 2f64.sqrt();
        assert_relative_eq!(cosine(&[1.0, 0.0], &[h, h]).unwrap(), h, max_relative = 1e-15);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let e = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 0.1]];
        let scaled: Vec<Vec<f64>> = e.iter().zip([2.0, 0.5, 7.0]).map(|(v, s)| v.iter().map(|x| x * s).collect()).collect();
        let a = cosine_select(&[0, 1, 2], &e, &[1.0, 1.0], 3).unwrap();
        let b = cosine_select(&[0, 1, 2], &scaled, &[3.0, 3.0], 3).unwrap();
        let ids = |v: &[Neighbor]| v.iter().map(|n| n.id).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x.score, y.score, max_relative = 1e-14);
        }
    }
}
