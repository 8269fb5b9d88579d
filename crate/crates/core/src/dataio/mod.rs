//! Case manifests, 8-bit PGM images and bounding-box masks.

mod manifest;
mod pgm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use manifest::{
    load_manifest, save_manifest, CaseRecord, Manifest, ManifestHeader, Split, CLASS_NAMES,
};
pub use pgm::{decode_pgm, encode_pgm, pgm_dimensions, read_pgm, write_pgm};

/// Axis-aligned box in pixels; covers columns `x..x+w` and rows `y..y+h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxRegion {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoxRegion {
    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }
}

/// Union of filled boxes as a binary `h×w` mask.
pub fn boxes_to_mask(boxes: &[BoxRegion], h: usize, w: usize) -> Result<Tensor> {
    let mut mask = Tensor::zeros(&[h, w]);
    for b in boxes {
        if !b.fits(h, w) {
            return Err(Error::arg(format!("box {b:?} exceeds the {h}x{w} image")));
        }
        for y in b.y..b.y + b.h {
            mask.row_mut(y)[b.x..b.x + b.w].fill(1.0);
        }
    }
    Ok(mask)
}
