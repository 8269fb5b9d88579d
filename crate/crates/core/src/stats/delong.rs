use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::roc::midranks;
use super::LabeledScores;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelongReport {
    pub auc_a: f64,
    pub auc_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub covariance: f64,
    /// Variance of `auc_a − auc_b`.
    pub variance: f64,
    pub z: f64,
    pub p: f64,
    /// Set when the difference has zero variance; `z = 0` and `p = 1` then.
    pub degenerate: bool,
    pub positives: usize,
    pub negatives: usize,
}

/// Placement values of one score set: per-positive `V10` and per-negative `V01`.
struct Components {
    auc: f64,
    v10: Vec<f64>,
    v01: Vec<f64>,
}

fn components(pos: &[f64], neg: &[f64]) -> Components {
    let (m, n) = (pos.len(), neg.len());
    let tx = midranks(pos);
    let ty = midranks(neg);
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let tz = midranks(&all);
    let v10: Vec<f64> = (0..m).map(|i| (tz[i] - tx[i]) / n as f64).collect();
    let v01: Vec<f64> = (0..n)
        .map(|j| 1.0 - (tz[m + j] - ty[j]) / m as f64)
        .collect();
    let auc = v10.iter().sum::<f64>() / m as f64;
    Components { auc, v10, v01 }
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / k, b.iter().sum::<f64>() / k);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (k - 1.0)
}

/// Paired comparison of two correlated AUCs on the same cases (DeLong et al.,
/// midrank formulation of Sun and Xu, `O(n log n)`).
pub fn delong_test(a: &LabeledScores, b: &LabeledScores) -> Result<DelongReport> {
    if a.labels != b.labels {
        return Err(Error::arg(
            "the two score sets must share the same label vector",
        ));
    }
    a.require_both_classes()?;
    let split = |d: &LabeledScores| -> (Vec<f64>, Vec<f64>) {
        let pos = d
            .scores
            .iter()
            .zip(&d.labels)
            .filter(|(_, &l)| l)
            .map(|(s, _)| *s)
            .collect();
        let neg = d
            .scores
            .iter()
            .zip(&d.labels)
            .filter(|(_, &l)| !l)
            .map(|(s, _)| *s)
            .collect();
        (pos, neg)
    };
    let (pa, na) = split(a);
    let (pb, nb) = split(b);
    let (m, n) = (pa.len(), na.len());
    if m < 2 || n < 2 {
        return Err(Error::Degenerate(format!(
            "DeLong variance needs at least two cases per class, got {m} positive and {n} negative"
        )));
    }
    let ca = components(&pa, &na);
    let cb = components(&pb, &nb);
    let s = |x: &[f64], y: &[f64], k: usize| covariance(x, y) / k as f64;
    let var_a = s(&ca.v10, &ca.v10, m) + s(&ca.v01, &ca.v01, n);
    let var_b = s(&cb.v10, &cb.v10, m) + s(&cb.v01, &cb.v01, n);
    let cov = s(&ca.v10, &cb.v10, m) + s(&ca.v01, &cb.v01, n);
    let variance = var_a + var_b - 2.0 * cov;
    let diff = ca.auc - cb.auc;
    // Anything below rounding noise of the summands counts as zero variance.
    let floor = 1e-14 * (var_a + var_b).max(f64::MIN_POSITIVE);
    let degenerate = variance.partial_cmp(&floor) != Some(std::cmp::Ordering::Greater);
    let (z, p) = if degenerate {
        (0.0, 1.0)
    } else {
        let z = diff / variance.sqrt();
        let normal = Normal::standard();
        (z, (2.0 * normal.sf(z.abs())).min(1.0))
    };
    Ok(DelongReport {
        auc_a: ca.auc,
        auc_b: cb.auc,
        var_a,
        var_b,
        covariance: cov,
        variance,
        z,
        p,
        degenerate,
        positives: m,
        negatives: n,
    })
}
