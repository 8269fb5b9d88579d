//! Saliency faithfulness metrics and map agreement.

mod ehr;
mod perturbation;
mod sensitivity;
mod ssim;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vit::VisionTransformer;

pub use ehr::{effective_heat_ratio, DEFAULT_EHR_STEPS};
pub use perturbation::{
    perturbation_test, perturbation_test_with, replace_patches, PerturbDirection, Perturbation,
    Ranking,
};
pub use sensitivity::{
    n_grid, pearson, sensitivity_n, SensitivitySamples, DEFAULT_MASKS, DEFAULT_N_COUNT,
};
pub use ssim::{map_agreement, ssim, Agreement, SSIM_WINDOW};

/// Anything that maps an image to per-class confidences on a patch grid.
pub trait Classifier: Sync {
    fn patch_size(&self) -> usize;
    fn confidence(&self, image: &Tensor, class: usize) -> Result<f32>;
}

impl Classifier for VisionTransformer {
    fn patch_size(&self) -> usize {
        self.config.patch_size
    }

    fn confidence(&self, image: &Tensor, class: usize) -> Result<f32> {
        VisionTransformer::confidence(self, image, class)
    }
}

/// Sampled curve with its trapezoidal integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub auc: f64,
    /// `auc` divided by the x-range.
    pub normalized: bool,
    /// Non-fatal conditions met while computing the curve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

impl MetricCurve {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, normalized: bool) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::arg(format!(
                "a curve needs at least two (x, y) samples, got {} xs and {} ys",
                xs.len(),
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::arg("curve positions must be non-decreasing"));
        }
        let mut curve = Self {
            xs,
            ys,
            auc: 0.0,
            normalized,
            flags: Vec::new(),
        };
        curve.auc = curve.integral();
        Ok(curve)
    }

    /// Recompute the integral from the samples.
    pub fn integral(&self) -> f64 {
        let raw = trapezoid(&self.xs, &self.ys);
        let range = self.xs[self.xs.len() - 1] - self.xs[0];
        if self.normalized && range > 0.0 {
            raw / range
        } else {
            raw
        }
    }

    /// `x,y` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let _ = writeln!(out, "{x},{y}");
        }
        out
    }
}

/// Serialized result of one metric run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub method: Option<String>,
    pub class: Option<usize>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub auc: f64,
    pub seed: Option<u64>,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl MetricReport {
    pub fn new(
        metric: &str,
        method: Option<String>,
        class: Option<usize>,
        curve: MetricCurve,
        seed: Option<u64>,
        config_hash: &str,
    ) -> Self {
        Self {
            metric: metric.to_string(),
            method,
            class,
            xs: curve.xs,
            ys: curve.ys,
            auc: curve.auc,
            seed,
            config_hash: config_hash.to_string(),
            flags: curve.flags,
        }
    }
}

/// Token `t` of a `g`-wide grid covers rows `(t / g)·p ..` and columns `(t % g)·p ..`.
pub(crate) fn patch_grid(image: &Tensor, patch: usize) -> Result<usize> {
    let (h, w) = image.dims2()?;
    if patch == 0 || h != w || h % patch != 0 {
        return Err(Error::dim(format!(
            "{h}x{w} image does not tile into {patch}-pixel patches"
        )));
    }
    Ok(h / patch)
}
