use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::LabeledScores;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Cases with `score >= threshold` are predicted positive.
    pub threshold: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn point(threshold: f64, tp: usize, fp: usize, tn: usize, fn_: usize) -> OperatingPoint {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    OperatingPoint {
        threshold,
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        tp,
        fp,
        tn,
        fn_,
    }
}

/// Confusion counts and rates for the rule `score >= threshold`.
pub fn evaluate_threshold(data: &LabeledScores, threshold: f64) -> OperatingPoint {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in data.scores.iter().zip(&data.labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    point(threshold, tp, fp, tn, fn_)
}

/// Threshold among the observed scores maximising F1; ties go to the lowest
/// threshold.
pub fn max_f1_operating_point(data: &LabeledScores) -> Result<OperatingPoint> {
    data.require_both_classes()?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        data.scores[b]
            .partial_cmp(&data.scores[a])
            .unwrap_or(Ordering::Equal)
    });
    let (pos, neg) = (data.positives(), data.negatives());
    let (mut tp, mut fp) = (0usize, 0usize);
    // (threshold, tp, fp) of the best candidate; F1 compared exactly as
    // 2tp / (tp + pos + fp) by cross-multiplication.
    let mut best: Option<(f64, usize, usize)> = None;
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
        // Scanning downward, so `>=` hands ties to the lower threshold.
        let better = match best {
            None => true,
            Some((_, btp, bfp)) => {
                (tp as u128) * (btp + pos + bfp) as u128 >= (btp as u128) * (tp + pos + fp) as u128
            }
        };
        if better {
            best = Some((t, tp, fp));
        }
    }
    let (t, tp, fp) = best.expect("non-empty data");
    Ok(point(t, tp, fp, neg - fp, pos - tp))
}
