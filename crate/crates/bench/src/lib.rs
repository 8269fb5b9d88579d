//! Shared fixtures for the benchmarks.

use atnb_core::synthetic::synthetic_case;
use atnb_core::{Rng, Tensor, VisionTransformer, VitConfig};

/// Default-sized network initialised from `seed`.
pub fn network(seed: u64) -> VisionTransformer {
    VisionTransformer::init(VitConfig::default(), &mut Rng::new(seed)).expect("default config")
}

/// Synthetic image matching the default network input.
pub fn image(seed: u64) -> Tensor {
    synthetic_case(&mut Rng::new(seed), VitConfig::default().image_size).image
}

/// `n` scores for two correlated readers with alternating labels.
pub fn paired_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut rng = Rng::new(seed);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let a: Vec<f64> = labels
        .iter()
        .map(|&l| rng.uniform() + if l { 0.5 } else { 0.0 })
        .collect();
    let b = a.iter().map(|v| v + 0.3 * rng.uniform()).collect();
    (a, b, labels)
}
