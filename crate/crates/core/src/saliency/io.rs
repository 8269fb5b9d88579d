//! On-disk layout of a map with stem `s`:
//!
//! * `s.atnb`: image-resolution view
//! * `s.grid.atnb`: token-grid view
//! * `s.json`: [`MapSidecar`]

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atnb;
use crate::error::{Error, Result};

use super::{MapMethod, SaliencyMap};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub method: MapMethod,
    pub class: Option<usize>,
    pub seed: Option<u64>,
    /// Identifier of the image the map explains.
    pub source: Option<String>,
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn save_map(
    stem: &Path,
    map: &SaliencyMap,
    seed: Option<u64>,
    source: Option<&str>,
) -> Result<()> {
    atnb::write(&with_suffix(stem, ".atnb"), &map.image)?;
    atnb::write(&with_suffix(stem, ".grid.atnb"), &map.grid)?;
    let sidecar = MapSidecar {
        method: map.method,
        class: map.class,
        seed,
        source: source.map(str::to_owned),
    };
    let path = with_suffix(stem, ".json");
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Load a map written by [`save_map`]. A bare `.atnb` image without grid or
/// sidecar is accepted as an external map pooled onto `grid` tokens per side.
pub fn load_map(stem: &Path, grid: usize) -> Result<(SaliencyMap, Option<MapSidecar>)> {
    let stem = match stem.to_str().and_then(|s| s.strip_suffix(".atnb")) {
        Some(s) => PathBuf::from(s),
        None => stem.to_path_buf(),
    };
    let image = atnb::read(&with_suffix(&stem, ".atnb"))?;
    let sidecar_path = with_suffix(&stem, ".json");
    let sidecar: Option<MapSidecar> = if sidecar_path.exists() {
        let text = fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    let grid_path = with_suffix(&stem, ".grid.atnb");
    let (method, class) = sidecar
        .as_ref()
        .map(|s| (s.method, s.class))
        .unwrap_or((MapMethod::External, None));
    let mut map = SaliencyMap::from_image(&image, grid, method, class)?;
    if grid_path.exists() {
        let stored = atnb::read(&grid_path)?;
        if stored.shape() != [grid, grid] {
            return Err(Error::dim(format!(
                "{}: grid has shape {:?}, expected {grid}x{grid}",
                grid_path.display(),
                stored.shape()
            )));
        }
        map.grid = stored.normalize_max();
    }
    map.image = image.normalize_max();
    Ok((map, sidecar))
}
