//! Weight bundles: a directory holding `config.json` (the [`VitConfig`]
//! fields) and one `ATNB1` file per parameter, named `<parameter>.atnb`
//! (e.g. `blocks.0.attn.q.weight.atnb`). See [`VitWeights::names`] for the
//! full list.

use std::fs;
use std::path::Path;

use crate::atnb;
use crate::error::{Error, Result};

use super::{VisionTransformer, VitConfig, VitWeights};

pub const CONFIG_FILE: &str = "config.json";

pub fn save(dir: &Path, net: &VisionTransformer) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let json = serde_json::to_string_pretty(&net.config)?;
    fs::write(&cfg_path, json).map_err(|e| Error::io(&cfg_path, e))?;
    for (name, t) in VitWeights::names(&net.config)
        .iter()
        .zip(net.weights.tensors())
    {
        atnb::write(&dir.join(format!("{name}.atnb")), t)?;
    }
    Ok(())
}

pub fn load(dir: &Path) -> Result<VisionTransformer> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config: VitConfig = serde_json::from_str(&text)?;
    config.validate()?;
    let tensors = VitWeights::names(&config)
        .iter()
        .map(|name| atnb::read(&dir.join(format!("{name}.atnb"))))
        .collect::<Result<Vec<_>>>()?;
    VisionTransformer::new(config, VitWeights::from_named(&config, tensors)?)
}
