use super::MetricCurve;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EHR_STEPS: usize = 100;

/// Effective heat ratio: for thresholds `t = k/steps`, `k = 1..=steps`, the
/// fraction of pixels with `map >= t` that lie inside the ground truth
/// (`gt > 0.5`). An empty thresholded area scores 0. The integral is
/// normalised by the threshold range.
pub fn effective_heat_ratio(map: &Tensor, gt: &Tensor, steps: usize) -> Result<MetricCurve> {
    if steps < 2 {
        return Err(Error::arg(format!(
            "EHR needs at least 2 thresholds, got {steps}"
        )));
    }
    if map.shape() != gt.shape() {
        return Err(Error::arg(format!(
            "map has shape {:?}, ground truth has {:?}",
            map.shape(),
            gt.shape()
        )));
    }
    let inside: Vec<bool> = gt.data().iter().map(|&v| v > 0.5).collect();
    let empty_gt = !inside.iter().any(|&b| b);
    // Count pixels per threshold bucket once, then accumulate from the top:
    // a pixel with value v is in B_t for every t = k/steps <= v.
    let mut area = vec![0u64; steps + 2];
    let mut hits = vec![0u64; steps + 2];
    for (&v, &g) in map.data().iter().zip(&inside) {
        let v = v as f64;
        // Largest k with k/steps <= v, checked against the exact comparison
        // used by the definition.
        let mut k = ((v * steps as f64).floor().max(0.0) as usize).min(steps);
        while k < steps && (k + 1) as f64 / steps as f64 <= v {
            k += 1;
        }
        while k > 0 && k as f64 / steps as f64 > v {
            k -= 1;
        }
        area[k] += 1;
        hits[k] += g as u64;
    }
    let mut ys = vec![0.0; steps];
    let (mut a, mut h) = (0u64, 0u64);
    for k in (1..=steps).rev() {
        a += area[k];
        h += hits[k];
        ys[k - 1] = if a == 0 { 0.0 } else { h as f64 / a as f64 };
    }
    let xs = (1..=steps).map(|k| k as f64 / steps as f64).collect();
    let mut curve = MetricCurve::new(xs, ys, true)?;
    if empty_gt {
        curve.flags.push("empty ground truth".into());
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_disjoint_maps() {
        let gt = Tensor::from_fn(8, 8, |y, _| if y < 3 { 1.0 } else { 0.0 });
        let perfect = effective_heat_ratio(&gt, &gt, 100).unwrap();
        assert!(perfect.ys.iter().all(|&y| y == 1.0));
        assert!((perfect.auc - 1.0).abs() < 1e-12);
        let disjoint = gt.map(|v| 1.0 - v);
        assert_eq!(effective_heat_ratio(&disjoint, &gt, 100).unwrap().auc, 0.0);
    }

    #[test]
    fn empty_ground_truth_is_flagged() {
        let map = Tensor::full(&[4, 4], 1.0);
        let c = effective_heat_ratio(&map, &Tensor::zeros(&[4, 4]), 10).unwrap();
        assert!(c.ys.iter().all(|&y| y == 0.0));
        assert_eq!(c.flags.len(), 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(
            effective_heat_ratio(&Tensor::zeros(&[4, 4]), &Tensor::zeros(&[4, 5]), 10).is_err()
        );
    }
}
