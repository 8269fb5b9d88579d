//! Quadratic-time statistics straight from their definitions.

/// `ψ(x, y)`: 1 if the positive outranks the negative, ½ on ties.
fn psi(x: f64, y: f64) -> f64 {
    if x > y {
        1.0
    } else if x == y {
        0.5
    } else {
        0.0
    }
}

/// AUC by counting every (positive, negative) pair. The numerator is kept as
/// an integer count of half-pairs so the result is a single rounding of
/// `(2·concordant + ties) / (2·m·n)`.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut halves = 0u64;
    let (mut m, mut n) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            m += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                halves += 2;
            } else if scores[i] == scores[j] {
                halves += 1;
            }
        }
    }
    halves as f64 / (2 * m * n) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelongOracle {
    pub auc_a: f64,
    pub auc_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub covariance: f64,
    pub variance: f64,
    pub z: f64,
}

/// DeLong's estimator with structural components computed pair by pair.
pub fn delong_quadratic(a: &[f64], b: &[f64], labels: &[bool]) -> DelongOracle {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let v10 = |s: &[f64]| -> Vec<f64> {
        pos.iter()
            .map(|&i| neg.iter().map(|&j| psi(s[i], s[j])).sum::<f64>() / n)
            .collect()
    };
    let v01 = |s: &[f64]| -> Vec<f64> {
        neg.iter()
            .map(|&j| pos.iter().map(|&i| psi(s[i], s[j])).sum::<f64>() / m)
            .collect()
    };
    let (a10, a01, b10, b01) = (v10(a), v01(a), v10(b), v01(b));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cov = |x: &[f64], y: &[f64]| {
        let (mx, my) = (mean(x), mean(y));
        x.iter()
            .zip(y)
            .map(|(p, q)| (p - mx) * (q - my))
            .sum::<f64>()
            / (x.len() as f64 - 1.0)
    };
    let var_a = cov(&a10, &a10) / m + cov(&a01, &a01) / n;
    let var_b = cov(&b10, &b10) / m + cov(&b01, &b01) / n;
    let covariance = cov(&a10, &b10) / m + cov(&a01, &b01) / n;
    let variance = var_a + var_b - 2.0 * covariance;
    let (auc_a, auc_b) = (mean(&a10), mean(&b10));
    DelongOracle {
        auc_a,
        auc_b,
        var_a,
        var_b,
        covariance,
        variance,
        z: (auc_a - auc_b) / variance.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Scan {
    pub threshold: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Evaluate `score >= t` at every observed score and keep the best F1,
/// preferring the lowest threshold among equal F1 values.
pub fn brute_force_max_f1(scores: &[f64], labels: &[bool]) -> F1Scan {
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let mut best: Option<(F1Scan, u64, u64)> = None;
    for &t in &candidates {
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= t, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let num = 2 * tp;
        let den = 2 * tp + fp + fn_;
        let strictly_better = match &best {
            None => true,
            Some((_, bn, bd)) => (num as u128) * (*bd as u128) > (*bn as u128) * (den as u128),
        };
        if strictly_better {
            let scan = F1Scan {
                threshold: t,
                f1: if den == 0 {
                    0.0
                } else {
                    num as f64 / den as f64
                },
                sensitivity: tp as f64 / (tp + fn_) as f64,
                specificity: tn as f64 / (tn + fp) as f64,
            };
            best = Some((scan, num, den));
        }
    }
    best.expect("non-empty scores").0
}
