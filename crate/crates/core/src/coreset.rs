//! Balanced, importance-weighted coreset.
//!
//! Each point is weighted by its squared distance to its class centroid.
//! Classes no larger than the cap are kept whole; larger classes are
//! subsampled without replacement by exponential keys `ln(u)/p`, whose
//! largest key is distributed exactly as `p`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::EmbeddedExample;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoresetConfig {
    pub lambda_b: usize,
    pub seed: u64,
}

impl Default for CoresetConfig {
    fn default() -> Self {
        CoresetConfig { lambda_b: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coreset {
    /// Selected examples grouped by class (ascending). Subsampled classes are
    /// in draw order, whole classes in dataset order.
    pub members: Vec<EmbeddedExample>,
}

impl Coreset {
    pub fn ids_for_class(&self, class: usize) -> Vec<u64> {
        self.members.iter().filter(|e| e.label == class).map(|e| e.id).collect()
    }
}

pub fn class_centroids(dataset: &[EmbeddedExample]) -> Result<BTreeMap<usize, Vec<f64>>> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("centroids of an empty dataset".into()));
    }
    let dim = dataset[0].embedding.len();
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for ex in dataset {
        if ex.embedding.len() != dim {
            return Err(Error::Shape(format!("example {} has dimension {}, expected {dim}", ex.id, ex.embedding.len())));
        }
        let entry = sums.entry(ex.label).or_insert_with(|| (vec![0.0; dim], 0));
        entry.0.iter_mut().zip(&ex.embedding).for_each(|(s, x)| *s += x);
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(c, (s, n))| (c, s.into_iter().map(|v| v / n as f64).collect()))
        .collect())
}

/// ‖x_i − μ_{y_i}‖² for every example.
pub fn importance_weights(dataset: &[EmbeddedExample], centroids: &BTreeMap<usize, Vec<f64>>) -> Result<Vec<f64>> {
    dataset
        .iter()
        .map(|ex| {
            let mu = centroids
                .get(&ex.label)
                .ok_or_else(|| Error::InvalidParameter(format!("no centroid for label {}", ex.label)))?;
            Ok(ex.embedding.iter().zip(mu).map(|(x, m)| (x - m) * (x - m)).sum())
        })
        .collect()
}

/// Normalised weights; uniform when every weight is zero.
pub fn sampling_distribution(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return vec![1.0 / weights.len() as f64; weights.len()];
    }
    weights.iter().map(|w| w / total).collect()
}

/// Indices of `k` draws without replacement, in draw order.
///
/// Points of zero probability are drawn only once every positive-probability
/// point has been taken, uniformly among themselves.
pub fn weighted_sample_without_replacement<R: Rng>(probs: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let mut keys: Vec<(f64, f64, usize)> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let u: f64 = 1.0 - rng.random::<f64>();
            let tie: f64 = rng.random();
            let key = if p > 0.0 { u.ln() / p } else { f64::NEG_INFINITY };
            (key, tie, i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    keys.into_iter().take(k).map(|(_, _, i)| i).collect()
}

pub fn build_coreset(dataset: &[EmbeddedExample], cfg: &CoresetConfig) -> Result<Coreset> {
    if cfg.lambda_b == 0 {
        return Err(Error::InvalidParameter("lambda_b must be at least 1".into()));
    }
    let centroids = class_centroids(dataset)?;
    let weights = importance_weights(dataset, &centroids)?;
    let mut members = Vec::new();
    for &class in centroids.keys() {
        let idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].label == class).collect();
        if idx.len() <= cfg.lambda_b {
            members.extend(idx.iter().map(|&i| dataset[i].clone()));
            continue;
        }
        let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
        let probs = sampling_distribution(&w);
        let mut rng = seed::rng(seed::derive_indexed(cfg.seed, "coreset", class as u64));
        let picks = weighted_sample_without_replacement(&probs, cfg.lambda_b, &mut rng);
        members.extend(picks.into_iter().map(|j| dataset[idx[j]].clone()));
    }
    Ok(Coreset { members })
}
