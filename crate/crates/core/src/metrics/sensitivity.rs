use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::perturbation::replace_patches;
use super::{patch_grid, Classifier, MetricCurve};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const DEFAULT_MASKS: usize = 200;
pub const DEFAULT_N_COUNT: usize = 10;

/// `count` integers log-spaced over `[1, patches / 2]`, rounded,
/// deduplicated, both endpoints included.
pub fn n_grid(patches: usize, count: usize) -> Result<Vec<usize>> {
    let hi = patches / 2;
    if hi < 1 || count < 2 {
        return Err(Error::arg(format!(
            "no sensitivity-n grid for {patches} patches and {count} points"
        )));
    }
    let ln_hi = (hi as f64).ln();
    let mut out: Vec<usize> = (0..count)
        .map(|k| ((ln_hi * k as f64 / (count - 1) as f64).exp().round() as usize).clamp(1, hi))
        .collect();
    out[0] = 1;
    out[count - 1] = hi;
    out.dedup();
    Ok(out)
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Spreads below rounding noise of the values count as zero variance.
    let tiny = |s: f64, m: f64| s <= (1e-12 * m.abs().max(1e-300)).powi(2) * n;
    if tiny(saa, ma) || tiny(sbb, mb) {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Random token masks and the confidence drop each causes. Independent of
/// the saliency map, so one sample set can score several maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySamples {
    pub ns: Vec<usize>,
    /// `masks[i][j]`: token set of mask `j` at `ns[i]`.
    pub masks: Vec<Vec<Vec<usize>>>,
    /// `deltas[i][j] = y_c(image) − y_c(image with masks[i][j] replaced)`.
    pub deltas: Vec<Vec<f64>>,
}

impl SensitivitySamples {
    pub fn draw<C: Classifier>(
        model: &C,
        image: &Tensor,
        class: usize,
        reference: &Tensor,
        num_masks: usize,
        n_count: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_masks < 2 {
            return Err(Error::arg(format!(
                "sensitivity-n needs at least 2 masks, got {num_masks}"
            )));
        }
        if reference.shape() != image.shape() {
            return Err(Error::arg("reference image shape differs from the image"));
        }
        let patch = model.patch_size();
        let g = patch_grid(image, patch)?;
        let ns = n_grid(g * g, n_count)?;
        let masks = ns
            .iter()
            .map(|&n| {
                (0..num_masks)
                    .map(|_| rng.sample_tokens(n, g * g))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let base = model.confidence(image, class)? as f64;
        let deltas = masks
            .iter()
            .map(|per_n: &Vec<Vec<usize>>| {
                per_n
                    .par_iter()
                    .map(|tokens| {
                        let mut img = image.clone();
                        replace_patches(&mut img, reference, tokens, patch)?;
                        Ok(base - model.confidence(&img, class)? as f64)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ns, masks, deltas })
    }

    /// Curve of Pearson(s, Δ) over n, where `s` sums `grid` over each mask.
    /// Zero-variance cases contribute 0 and are flagged.
    pub fn curve(&self, grid: &Tensor) -> Result<MetricCurve> {
        let tokens = grid.len();
        let mut flags = Vec::new();
        let mut ys = Vec::with_capacity(self.ns.len());
        for ((n, masks), deltas) in self.ns.iter().zip(&self.masks).zip(&self.deltas) {
            let sums: Vec<f64> = masks
                .iter()
                .map(|m| {
                    m.iter()
                        .map(|&t| {
                            grid.data().get(t).map(|&v| v as f64).ok_or_else(|| {
                                Error::dim(format!("token {t} outside a map of {tokens} tokens"))
                            })
                        })
                        .sum::<Result<f64>>()
                })
                .collect::<Result<_>>()?;
            ys.push(match pearson(&sums, deltas) {
                Some(r) => r,
                None => {
                    flags.push(format!("zero variance at n={n}; correlation set to 0"));
                    0.0
                }
            });
        }
        let xs: Vec<f64> = self.ns.iter().map(|&n| n as f64).collect();
        let mut curve = MetricCurve::new(xs, ys, false)?;
        curve.flags = flags;
        Ok(curve)
    }
}

/// Sensitivity-n of a token-grid map.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_n<C: Classifier>(
    model: &C,
    image: &Tensor,
    class: usize,
    grid: &Tensor,
    reference: &Tensor,
    num_masks: usize,
    n_count: usize,
    rng: &mut Rng,
) -> Result<MetricCurve> {
    SensitivitySamples::draw(model, image, class, reference, num_masks, n_count, rng)?.curve(grid)
}
