//! Saliency maps: attention roll-out, gradient-weighted roll-out (TMME),
//! a GradCAM analogue on the final block's token features, and the
//! synthetic control maps used in the reader study.
//!
//! Every map carries two views normalised so their maximum is exactly 1 (or
//! is identically zero): the per-patch `grid` and an image-resolution `image`.

mod io;
pub mod perlin;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{block_mean, gaussian_blur};
use crate::rng::Rng;
use crate::tensor::{bilinear_upsample, matmul, normalize_rows, Tensor};
use crate::vit::{AttentionCapture, AttentionGradients, VisionTransformer};

pub use io::{load_map, save_map, MapSidecar};

/// Gaussian blur width of artificial maps, as a fraction of the image width.
pub const ARTIFICIAL_BLUR_FRACTION: f64 = 0.02;
/// Gaussian blur width of random maps, as a fraction of the image width.
pub const RANDOM_BLUR_FRACTION: f64 = 0.02;
/// Lattice cells across the image for the first Perlin field of a random map.
pub const RANDOM_BASE_CELLS: f64 = 4.0;
pub const DEFAULT_OCTAVES: usize = 3;

/// How attention heads of one layer are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMerge {
    #[default]
    Mean,
    Min,
}

/// Where a map came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MapMethod {
    Rollout(HeadMerge),
    Tmme(HeadMerge),
    GradCam,
    Artificial,
    Random,
    External,
}

impl fmt::Display for MapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let merge = |m: &HeadMerge| match m {
            HeadMerge::Mean => "mean",
            HeadMerge::Min => "min",
        };
        match self {
            MapMethod::Rollout(m) => write!(f, "rollout-{}", merge(m)),
            MapMethod::Tmme(m) => write!(f, "tmme-{}", merge(m)),
            MapMethod::GradCam => f.write_str("gradcam"),
            MapMethod::Artificial => f.write_str("artificial"),
            MapMethod::Random => f.write_str("random"),
            MapMethod::External => f.write_str("external"),
        }
    }
}

impl FromStr for MapMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rollout" | "rollout-mean" => MapMethod::Rollout(HeadMerge::Mean),
            "rollout-min" => MapMethod::Rollout(HeadMerge::Min),
            "tmme" | "tmme-mean" => MapMethod::Tmme(HeadMerge::Mean),
            "tmme-min" => MapMethod::Tmme(HeadMerge::Min),
            "gradcam" => MapMethod::GradCam,
            "artificial" => MapMethod::Artificial,
            "random" => MapMethod::Random,
            "external" => MapMethod::External,
            other => return Err(Error::arg(format!("unknown saliency method {other:?}"))),
        })
    }
}

impl From<MapMethod> for String {
    fn from(m: MapMethod) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for MapMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl MapMethod {
    /// Methods that can be recomputed from the network alone.
    pub fn is_model_based(&self) -> bool {
        matches!(
            self,
            MapMethod::Rollout(_) | MapMethod::Tmme(_) | MapMethod::GradCam
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub grid: Tensor,
    pub image: Tensor,
    pub method: MapMethod,
    pub class: Option<usize>,
}

impl SaliencyMap {
    /// Map defined on the token grid; the image view is its corner-aligned
    /// bilinear upsampling.
    pub fn from_grid(
        grid: &Tensor,
        (h, w): (usize, usize),
        method: MapMethod,
        class: Option<usize>,
    ) -> Result<Self> {
        let (gh, gw) = grid.dims2()?;
        if gh != gw {
            return Err(Error::dim(format!(
                "saliency grid must be square, got {gh}x{gw}"
            )));
        }
        let grid = grid.normalize_max();
        let image = bilinear_upsample(&grid, h, w)?.normalize_max();
        Ok(Self {
            grid,
            image,
            method,
            class,
        })
    }

    /// Map defined at image resolution; the grid view is the block mean over
    /// each patch.
    pub fn from_image(
        image: &Tensor,
        grid: usize,
        method: MapMethod,
        class: Option<usize>,
    ) -> Result<Self> {
        let (h, w) = image.dims2()?;
        if grid == 0 || h % grid != 0 || w % grid != 0 {
            return Err(Error::dim(format!(
                "{h}x{w} image does not tile into a {grid}x{grid} grid"
            )));
        }
        let image = image.normalize_max();
        Ok(Self {
            grid: block_mean(&image, grid).normalize_max(),
            image,
            method,
            class,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid.shape()[0]
    }

    pub fn is_zero(&self) -> bool {
        self.grid.max() <= 0.0
    }
}

fn merge_heads(heads: &[Tensor], merge: HeadMerge) -> Result<Tensor> {
    let first = heads
        .first()
        .ok_or_else(|| Error::arg("layer without heads"))?;
    let mut acc = first.clone();
    for h in &heads[1..] {
        acc = match merge {
            HeadMerge::Mean => acc.add(h)?,
            HeadMerge::Min => {
                let mut m = acc;
                if m.shape() != h.shape() {
                    return Err(Error::dim("heads of one layer differ in shape"));
                }
                for (a, &b) in m.data_mut().iter_mut().zip(h.data()) {
                    *a = a.min(b);
                }
                m
            }
        };
    }
    if merge == HeadMerge::Mean {
        acc = acc.scale(1.0 / heads.len() as f32);
    }
    Ok(acc)
}

/// `normalize_rows(merged + I)`: the skip connection folded into the layer's
/// token-mixing matrix.
fn with_residual(merged: &Tensor) -> Result<Tensor> {
    let (n, m) = merged.dims2()?;
    if n != m {
        return Err(Error::dim("attention matrices must be square"));
    }
    normalize_rows(&merged.add(&Tensor::identity(n))?)
}

/// `Ā(L)·Ā(L−1)·…·Ā(1)` for per-layer mixing matrices listed shallow first.
pub fn chain_layers(layers: &[Tensor]) -> Result<Tensor> {
    let mut it = layers.iter();
    let mut r = it
        .next()
        .ok_or_else(|| Error::arg("no layers to roll out"))?
        .clone();
    for a in it {
        r = matmul(a, &r)?;
    }
    Ok(r)
}

/// Class-token row of `r` restricted to patch tokens, as a `g×g` grid.
fn class_row_grid(r: &Tensor) -> Result<Tensor> {
    let (t, _) = r.dims2()?;
    let g = grid_side(t - 1)?;
    Tensor::new(vec![g, g], r.row(0)[1..].to_vec())
}

fn grid_side(patches: usize) -> Result<usize> {
    let g = (patches as f64).sqrt().round() as usize;
    if g == 0 || g * g != patches {
        return Err(Error::dim(format!(
            "{patches} patch tokens do not form a square grid"
        )));
    }
    Ok(g)
}

fn rollout_of(per_layer_heads: &[Vec<Tensor>], merge: HeadMerge) -> Result<Tensor> {
    let layers = per_layer_heads
        .iter()
        .map(|heads| with_residual(&merge_heads(heads, merge)?))
        .collect::<Result<Vec<_>>>()?;
    class_row_grid(&chain_layers(&layers)?)
}

/// Plain attention roll-out.
pub fn rollout(
    capture: &AttentionCapture,
    merge: HeadMerge,
    size: (usize, usize),
) -> Result<SaliencyMap> {
    let grid = rollout_of(&capture.attention, merge)?;
    SaliencyMap::from_grid(&grid, size, MapMethod::Rollout(merge), None)
}

/// Roll-out of `relu(G ⊙ A)` per head (clamped before merging).
pub fn tmme(
    capture: &AttentionCapture,
    grads: &AttentionGradients,
    merge: HeadMerge,
    class: usize,
    size: (usize, usize),
) -> Result<SaliencyMap> {
    if grads.class != class {
        return Err(Error::arg(format!(
            "gradients are conditioned on class {}, map requested for class {class}",
            grads.class
        )));
    }
    if grads.attention.len() != capture.attention.len() {
        return Err(Error::dim(
            "gradients and capture have different layer counts",
        ));
    }
    let weighted = capture
        .attention
        .iter()
        .zip(&grads.attention)
        .map(|(al, gl)| {
            if al.len() != gl.len() {
                return Err(Error::dim(
                    "gradients and capture have different head counts",
                ));
            }
            al.iter()
                .zip(gl)
                .map(|(a, g)| Ok(g.mul(a)?.map(|v| v.max(0.0))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = rollout_of(&weighted, merge)?;
    SaliencyMap::from_grid(&grid, size, MapMethod::Tmme(merge), Some(class))
}

/// `relu(Σ_k α_k F[t,k])` with `α_k` the patch-mean of `∂y_c/∂F[:,k]`.
pub fn gradcam(
    capture: &AttentionCapture,
    grads: &AttentionGradients,
    class: usize,
    size: (usize, usize),
) -> Result<SaliencyMap> {
    if grads.class != class {
        return Err(Error::arg(format!(
            "gradients are conditioned on class {}, map requested for class {class}",
            grads.class
        )));
    }
    let f = &capture.features;
    let gf = &grads.features;
    if f.shape() != gf.shape() {
        return Err(Error::dim("feature gradients do not match features"));
    }
    let (p, d) = f.dims2()?;
    let alpha: Vec<f64> = (0..d)
        .map(|k| (0..p).map(|t| gf.at(t, k) as f64).sum::<f64>() / p as f64)
        .collect();
    let scores: Vec<f32> = (0..p)
        .map(|t| {
            let s: f64 = f
                .row(t)
                .iter()
                .zip(&alpha)
                .map(|(&x, a)| x as f64 * a)
                .sum();
            s.max(0.0) as f32
        })
        .collect();
    let g = grid_side(p)?;
    let grid = Tensor::new(vec![g, g], scores)?;
    SaliencyMap::from_grid(&grid, size, MapMethod::GradCam, Some(class))
}

/// Model-based map for `image`.
pub fn explain(
    net: &VisionTransformer,
    image: &Tensor,
    class: usize,
    method: MapMethod,
) -> Result<SaliencyMap> {
    let size = image.dims2()?;
    let capture = net.forward(image)?;
    match method {
        MapMethod::Rollout(merge) => rollout(&capture, merge, size),
        MapMethod::Tmme(merge) => tmme(
            &capture,
            &net.backward(&capture, class)?,
            merge,
            class,
            size,
        ),
        MapMethod::GradCam => gradcam(&capture, &net.backward(&capture, class)?, class, size),
        other => Err(Error::arg(format!(
            "{other} maps are not computed from the network"
        ))),
    }
}

/// Blurred ground-truth segmentation.
pub fn artificial_map(mask: &Tensor, grid: usize) -> Result<SaliencyMap> {
    let (_, w) = mask.dims2()?;
    let blurred = gaussian_blur(mask, ARTIFICIAL_BLUR_FRACTION * w as f64);
    SaliencyMap::from_image(&blurred, grid, MapMethod::Artificial, None)
}

/// Product of `octaves + 1` independent Perlin fields, blurred and normalised.
/// Field `k` spans `RANDOM_BASE_CELLS·(k + 1)` lattice cells across the image.
pub fn random_map(
    rng: &mut Rng,
    (h, w): (usize, usize),
    octaves: usize,
    grid: usize,
) -> Result<SaliencyMap> {
    if octaves == 0 {
        return Err(Error::arg("random maps need at least one octave"));
    }
    let mut field = perlin::Perlin::new(rng).field(h, w, RANDOM_BASE_CELLS);
    for k in 1..=octaves {
        let next = perlin::Perlin::new(rng).field(h, w, RANDOM_BASE_CELLS * (k + 1) as f64);
        field = field.mul(&next)?;
    }
    let blurred = gaussian_blur(&field, RANDOM_BLUR_FRACTION * w as f64);
    SaliencyMap::from_image(&blurred, grid, MapMethod::Random, None)
}

#[cfg(test)]
mod tests;
