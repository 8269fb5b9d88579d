use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::LabeledScores;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Cases with `score >= threshold` are called positive.
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    /// From the strictest threshold (`+inf`, nothing positive) down to the
    /// lowest observed score (everything positive).
    pub points: Vec<RocPoint>,
}

/// Doubled midranks (1-based), so ties stay exact integers:
/// `out[i] / 2` is the average rank of `values[i]`.
pub(crate) fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut out = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 averaged, doubled.
        let doubled = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            out[k] = doubled;
        }
        i = j + 1;
    }
    out
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    doubled_midranks(values)
        .into_iter()
        .map(|r| r as f64 / 2.0)
        .collect()
}

/// Mann–Whitney AUC: the fraction of positive/negative pairs ranked
/// correctly, ties counting one half.
pub fn roc_auc(data: &LabeledScores) -> Result<RocCurve> {
    data.require_both_classes()?;
    let (m, n) = (data.positives() as u64, data.negatives() as u64);
    let ranks = doubled_midranks(&data.scores);
    let doubled_rank_sum: u64 = ranks
        .iter()
        .zip(&data.labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    // 2·U = 2·R − m(m+1); AUC = U / (mn).
    let auc = (doubled_rank_sum - m * (m + 1)) as f64 / (2 * m * n) as f64;

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        data.scores[b]
            .partial_cmp(&data.scores[a])
            .unwrap_or(Ordering::Equal)
    });
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let t = data.scores[order[i]];
        while i < order.len() && data.scores[order[i]] == t {
            if data.labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            tpr: tp as f64 / m as f64,
            fpr: fp as f64 / n as f64,
        });
    }
    Ok(RocCurve { auc, points })
}
