//! ROC analysis, paired DeLong comparison, percentile bootstrap, max-F1
//! operating points and histogram-binning calibration.

mod bootstrap;
mod calibration;
mod delong;
mod operating;
mod roc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bootstrap::{bootstrap_ci, bootstrap_mean, BootstrapCi, DEFAULT_RESAMPLES};
pub use calibration::{Calibrated, Calibrator, DEFAULT_BINS};
pub use delong::{delong_test, DelongReport};
pub use operating::{evaluate_threshold, max_f1_operating_point, OperatingPoint};
pub use roc::{midranks, roc_auc, RocCurve, RocPoint};

/// Scores paired with binary labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::arg(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::arg(format!("score {i} is not finite")));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Both label classes present, as ROC-type statistics require.
    pub(crate) fn require_both_classes(&self) -> Result<()> {
        let (p, n) = (self.positives(), self.negatives());
        if p == 0 || n == 0 {
            return Err(Error::Degenerate(format!(
                "need positive and negative cases, got {p} positive and {n} negative"
            )));
        }
        Ok(())
    }

    /// Subset by case index, for resampling.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Generic statistic report: `{metric, estimate, ci_lo, ci_hi, n, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub metric: String,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    pub seed: u64,
}
