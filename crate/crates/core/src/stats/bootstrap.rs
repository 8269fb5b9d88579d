use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    /// Statistic on the original sample.
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
    /// Resamples on which the statistic was defined (e.g. both classes drawn).
    pub valid: usize,
    pub seed: u64,
}

/// Percentile bootstrap (2.5 / 97.5) over `n` cases resampled with
/// replacement. `statistic` receives the resampled case indices and may
/// return `None` when undefined on that resample; such resamples are skipped.
///
/// Resample `i` draws from `Rng::stream(seed, i)`, so `parallel` only
/// changes wall time, never the result.
pub fn bootstrap_ci<F>(
    n: usize,
    statistic: F,
    resamples: usize,
    seed: u64,
    parallel: bool,
) -> Result<BootstrapCi>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if n == 0 {
        return Err(Error::arg("cannot bootstrap an empty sample"));
    }
    if resamples < 100 {
        return Err(Error::arg(format!(
            "need at least 100 resamples, got {resamples}"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let estimate = statistic(&all)
        .ok_or_else(|| Error::Degenerate("statistic undefined on the full sample".into()))?;
    let one = |i: usize| {
        let mut rng = Rng::stream(seed, i as u64);
        let idx: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
        statistic(&idx)
    };
    let values: Vec<Option<f64>> = if parallel {
        (0..resamples).into_par_iter().map(one).collect()
    } else {
        (0..resamples).map(one).collect()
    };
    let values: Vec<f64> = values.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::Degenerate(
            "statistic undefined on every resample".into(),
        ));
    }
    let valid = values.len();
    let mut data = Data::new(values);
    Ok(BootstrapCi {
        estimate,
        lo: data.quantile(0.025),
        hi: data.quantile(0.975),
        resamples,
        valid,
        seed,
    })
}

/// Mean of `values[idx]`, shifted by the first element so constant samples
/// come out exact.
fn shifted_mean(values: &[f64], idx: &[usize]) -> f64 {
    let origin = values[idx[0]];
    origin + idx.iter().map(|&i| values[i] - origin).sum::<f64>() / idx.len() as f64
}

/// Bootstrap CI of the sample mean.
pub fn bootstrap_mean(
    values: &[f64],
    resamples: usize,
    seed: u64,
    parallel: bool,
) -> Result<BootstrapCi> {
    bootstrap_ci(
        values.len(),
        |idx| Some(shifted_mean(values, idx)),
        resamples,
        seed,
        parallel,
    )
}
