use serde::{Deserialize, Serialize};

use super::LabeledScores;
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// Histogram-binning calibrator: equal-width bins on `[0, 1]`, each mapping
/// to the empirical positive rate of the validation scores it holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    /// `bins + 1` strictly increasing edges from 0 to 1.
    pub edges: Vec<f64>,
    /// Output per bin; empty bins carry `global_rate`.
    pub rates: Vec<f64>,
    pub counts: Vec<usize>,
    pub global_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub value: f64,
    /// The raw score lay outside `[0, 1]` and was clamped first.
    pub clamped: bool,
}

impl Calibrator {
    pub fn fit(validation: &LabeledScores, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::arg("need at least one calibration bin"));
        }
        if validation.is_empty() {
            return Err(Error::arg("cannot calibrate on an empty validation set"));
        }
        let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        let mut counts = vec![0usize; bins];
        let mut hits = vec![0usize; bins];
        for (&s, &l) in validation.scores.iter().zip(&validation.labels) {
            let b = bin_of(s.clamp(0.0, 1.0), bins);
            counts[b] += 1;
            hits[b] += l as usize;
        }
        let global_rate = validation.positives() as f64 / validation.len() as f64;
        let rates = counts
            .iter()
            .zip(&hits)
            .map(|(&c, &h)| {
                if c == 0 {
                    global_rate
                } else {
                    h as f64 / c as f64
                }
            })
            .collect();
        Ok(Self {
            edges,
            rates,
            counts,
            global_rate,
        })
    }

    pub fn bins(&self) -> usize {
        self.rates.len()
    }

    pub fn apply(&self, score: f64) -> Calibrated {
        let clamped = !(0.0..=1.0).contains(&score);
        if clamped {
            log::warn!("calibrating out-of-range score {score}; clamped to [0, 1]");
        }
        let s = if score.is_nan() {
            0.0
        } else {
            score.clamp(0.0, 1.0)
        };
        Calibrated {
            value: self.rates[bin_of(s, self.bins())],
            clamped,
        }
    }
}

/// Bin `k` holds `[k/bins, (k+1)/bins)`; the last bin also holds 1.
fn bin_of(s: f64, bins: usize) -> usize {
    ((s * bins as f64).floor() as usize).min(bins - 1)
}
