use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;
use crate::stats::{bootstrap_mean, BootstrapCi};
use crate::tensor::Tensor;

/// Side of the Gaussian SSIM window.
pub const SSIM_WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Gaussian-weighted means over every fully contained window ("valid"
/// correlation), separably.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all 11×11 windows (Gaussian σ = 1.5, K1 = 0.01,
/// K2 = 0.03, dynamic range 1).
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "SSIM inputs differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (h, w) = a.dims2()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::arg(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let x: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let k = window();
    let mx = filter_valid(&x, h, w, &k);
    let my = filter_valid(&y, h, w, &k);
    let sxx = filter_valid(&prod(&x, &x), h, w, &k);
    let syy = filter_valid(&prod(&y, &y), h, w, &k);
    let sxy = filter_valid(&prod(&x, &y), h, w, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ma, mb) = (mx[i], my[i]);
        let (va, vb, cov) = (sxx[i] - ma * ma, syy[i] - mb * mb, sxy[i] - ma * mb);
        total +=
            ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Ok(total / mx.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub mean: f64,
    pub ci: BootstrapCi,
    /// Per-pair SSIM of the image views.
    pub scores: Vec<f64>,
}

/// Mean pairwise SSIM of image views with a case-level bootstrap CI.
pub fn map_agreement(
    a: &[SaliencyMap],
    b: &[SaliencyMap],
    resamples: usize,
    seed: u64,
) -> Result<Agreement> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "{} maps paired with {} maps",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::arg("no map pairs to compare"));
    }
    let scores = a
        .iter()
        .zip(b)
        .map(|(x, y)| ssim(&x.image, &y.image))
        .collect::<Result<Vec<_>>>()?;
    let ci = bootstrap_mean(&scores, resamples, seed, true)?;
    Ok(Agreement {
        mean: ci.estimate,
        ci,
        scores,
    })
}
