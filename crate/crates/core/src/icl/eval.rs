//! Prediction records and classification metrics.
//!
//! Counts are accumulated exactly and the ratios are formed as rationals, so
//! hand-computed confusion-matrix values are reproduced without rounding
//! drift. Conversion to `f64` happens once at the end.

use std::collections::BTreeMap;

use num::{BigInt, BigRational, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::parse::ParsedLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub query_id: u64,
    pub gold: usize,
    /// Raw completion text; absent when the client call failed.
    pub completion: Option<String>,
    pub parsed: ParsedLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_error: Option<String>,
    pub demonstration_ids: Vec<u64>,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.parsed == ParsedLabel::Label(self.gold)
    }
}

fn ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("ratio of counts is finite")
}

pub fn accuracy_exact(records: &[PredictionRecord]) -> Result<BigRational> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("accuracy of an empty record set".into()));
    }
    let correct = records.iter().filter(|r| r.is_correct()).count();
    Ok(ratio(correct, records.len()))
}

pub fn accuracy(records: &[PredictionRecord]) -> Result<f64> {
    accuracy_exact(records).map(|r| to_f64(&r))
}

/// Per-label F1 = 2TP / (2TP + FP + FN), which equals 2PR/(P+R) and is 0
/// when the label is neither predicted nor present.
pub fn per_class_f1_exact(records: &[PredictionRecord], num_labels: usize) -> Result<Vec<BigRational>> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("F1 of an empty record set".into()));
    }
    let mut tp = vec![0usize; num_labels];
    let mut fp = vec![0usize; num_labels];
    let mut fneg = vec![0usize; num_labels];
    for r in records {
        if r.gold >= num_labels {
            return Err(Error::Schema(format!("gold label {} outside label list", r.gold)));
        }
        match r.parsed {
            ParsedLabel::Label(p) if p == r.gold => tp[p] += 1,
            ParsedLabel::Label(p) => {
                if p >= num_labels {
                    return Err(Error::Schema(format!("predicted label {p} outside label list")));
                }
                fp[p] += 1;
                fneg[r.gold] += 1;
            }
            ParsedLabel::Failure => fneg[r.gold] += 1,
        }
    }
    Ok((0..num_labels)
        .map(|c| {
            let den = 2 * tp[c] + fp[c] + fneg[c];
            if den == 0 {
                BigRational::zero()
            } else {
                ratio(2 * tp[c], den)
            }
        })
        .collect())
}

pub fn weighted_f1_exact(records: &[PredictionRecord], num_labels: usize) -> Result<BigRational> {
    let f1 = per_class_f1_exact(records, num_labels)?;
    let mut support = vec![0usize; num_labels];
    for r in records {
        support[r.gold] += 1;
    }
    Ok(f1
        .iter()
        .zip(&support)
        .fold(BigRational::zero(), |acc, (f, &s)| acc + f * ratio(s, records.len())))
}

pub fn weighted_f1(records: &[PredictionRecord], num_labels: usize) -> Result<f64> {
    weighted_f1_exact(records, num_labels).map(|r| to_f64(&r))
}

/// Evaluation summary for one selection strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub parse_failure_rate: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    pub num_queries: usize,
    pub client_failures: usize,
}

impl StrategyReport {
    /// Records are folded in query-id order so the report does not depend on
    /// completion order.
    pub fn from_records(strategy: &str, records: &[PredictionRecord], label_list: &[String]) -> Result<Self> {
        let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
        sorted.sort_by_key(|r| r.query_id);
        let sorted: Vec<PredictionRecord> = sorted.into_iter().cloned().collect();
        let per_class = per_class_f1_exact(&sorted, label_list.len())?;
        let failures = sorted.iter().filter(|r| r.parsed == ParsedLabel::Failure).count();
        Ok(StrategyReport {
            strategy: strategy.to_string(),
            accuracy: accuracy(&sorted)?,
            weighted_f1: weighted_f1(&sorted, label_list.len())?,
            parse_failure_rate: to_f64(&ratio(failures, sorted.len())),
            per_class_f1: label_list
                .iter()
                .cloned()
                .zip(per_class.iter().map(to_f64))
                .collect(),
            num_queries: sorted.len(),
            client_failures: sorted.iter().filter(|r| r.client_error.is_some()).count(),
        })
    }
}
