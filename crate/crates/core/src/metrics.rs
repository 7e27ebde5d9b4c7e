//! Hit ratio and NDCG for single-target ranking.
//!
//! A result is the 1-based rank of the ground-truth item in the grounded list, or
//! `None` when it was not retrieved at all.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("metric is undefined over zero cases")]
    Empty,
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
}

fn check(results: &[Option<usize>], n: usize) -> Result<(), MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    if results.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Fraction of cases whose truth ranks within the top `n`.
pub fn hit_ratio(results: &[Option<usize>], n: usize) -> Result<f64, MetricError> {
    check(results, n)?;
    let hits = results.iter().filter(|r| r.is_some_and(|r| r <= n)).count();
    Ok(hits as f64 / results.len() as f64)
}

/// Discounted gain of one case with a single relevant item (ideal DCG is 1).
pub fn case_ndcg(rank: Option<usize>, n: usize) -> f64 {
    match rank {
        Some(r) if r >= 1 && r <= n => 1.0 / ((r + 1) as f64).log2(),
        _ => 0.0,
    }
}

/// Mean per-case NDCG@n.
pub fn ndcg(results: &[Option<usize>], n: usize) -> Result<f64, MetricError> {
    check(results, n)?;
    let total: f64 = results.iter().map(|r| case_ndcg(*r, n)).sum();
    Ok(total / results.len() as f64)
}

/// One row of an evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub split: String,
    pub n: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub count: usize,
}

/// HR and NDCG at each cutoff; an empty result set yields no rows.
pub fn metric_rows(split: &str, results: &[Option<usize>], cutoffs: &[usize]) -> Vec<MetricRow> {
    if results.is_empty() {
        return Vec::new();
    }
    cutoffs
        .iter()
        .filter_map(|&n| {
            Some(MetricRow {
                split: split.to_string(),
                n,
                hr: hit_ratio(results, n).ok()?,
                ndcg: ndcg(results, n).ok()?,
                count: results.len(),
            })
        })
        .collect()
}
