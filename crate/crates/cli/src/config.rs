use std::fs;
use std::path::Path;

use anyhow::{Context as _, Result};
use atnb_core::metrics::{DEFAULT_EHR_STEPS, DEFAULT_MASKS, DEFAULT_N_COUNT};
use atnb_core::saliency::DEFAULT_OCTAVES;
use atnb_core::stats::{DEFAULT_BINS, DEFAULT_RESAMPLES};
use atnb_core::VitConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Tunable parameters shared by all subcommands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Architecture used when no weight bundle is given.
    pub model: VitConfig,
    /// Class explained and scored (0 = pneumothorax).
    pub class: usize,
    /// Regenerate model-based maps after every perturbation step.
    pub recompute: bool,
    pub sensitivity_masks: usize,
    pub sensitivity_n_count: usize,
    pub ehr_steps: usize,
    pub resamples: usize,
    pub calibration_bins: usize,
    pub random_octaves: usize,
    pub demo_cases: usize,
    pub demo_sensitivity_masks: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: VitConfig::default(),
            class: 0,
            recompute: true,
            sensitivity_masks: DEFAULT_MASKS,
            sensitivity_n_count: DEFAULT_N_COUNT,
            ehr_steps: DEFAULT_EHR_STEPS,
            resamples: DEFAULT_RESAMPLES,
            calibration_bins: DEFAULT_BINS,
            random_octaves: DEFAULT_OCTAVES,
            demo_cases: 20,
            demo_sensitivity_masks: 50,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.model.validate()?;
        Ok(config)
    }
}

/// Hex SHA-256 of the canonical JSON encoding of `value` (object keys sorted).
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_vec(&serde_json::to_value(value)?)?;
    Ok(Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
