use serde::{Deserialize, Serialize};

use super::{patch_grid, Classifier, MetricCurve};
use crate::error::{Error, Result};
use crate::saliency::{explain, MapMethod};
use crate::tensor::Tensor;
use crate::vit::VisionTransformer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbDirection {
    /// Most important patch first.
    Positive,
    /// Least important patch first.
    Negative,
}

/// Source of the patch ranking.
#[derive(Clone, Copy, Debug)]
pub enum Ranking<'a> {
    /// Recomputable model-based method.
    Model(MapMethod),
    /// Fixed token grid, e.g. an external map; never recomputed.
    Fixed(&'a Tensor),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// `xs` = fraction of patches replaced, `ys` = class confidence.
    pub curve: MetricCurve,
    /// Token replaced at each step.
    pub order: Vec<usize>,
}

/// Copy the given tokens' patches from `reference` into `image`.
pub fn replace_patches(
    image: &mut Tensor,
    reference: &Tensor,
    tokens: &[usize],
    patch: usize,
) -> Result<()> {
    let g = patch_grid(image, patch)?;
    if reference.shape() != image.shape() {
        return Err(Error::arg(format!(
            "reference image has shape {:?}, image has {:?}",
            reference.shape(),
            image.shape()
        )));
    }
    for &t in tokens {
        if t >= g * g {
            return Err(Error::arg(format!("token {t} outside a {g}x{g} grid")));
        }
        let (gy, gx) = (t / g, t % g);
        for y in gy * patch..(gy + 1) * patch {
            let src = &reference.row(y)[gx * patch..(gx + 1) * patch];
            image.row_mut(y)[gx * patch..(gx + 1) * patch].copy_from_slice(src);
        }
    }
    Ok(())
}

/// Unremoved token with the highest (positive) or lowest (negative) score,
/// lowest index on ties.
fn pick(grid: &[f32], removed: &[bool], direction: PerturbDirection) -> usize {
    let mut best: Option<usize> = None;
    for (t, &v) in grid.iter().enumerate() {
        if removed[t] {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => match direction {
                PerturbDirection::Positive => v > grid[b],
                PerturbDirection::Negative => v < grid[b],
            },
        };
        if better {
            best = Some(t);
        }
    }
    best.expect("an unremoved token remains")
}

/// Perturbation curve for any classifier. `rank` maps the current image to a
/// token grid; it is called once on the input, and again after every step when
/// `recompute` is set.
pub fn perturbation_test_with<C: Classifier>(
    model: &C,
    image: &Tensor,
    class: usize,
    reference: &Tensor,
    direction: PerturbDirection,
    recompute: bool,
    rank: &mut dyn FnMut(&Tensor) -> Result<Tensor>,
) -> Result<Perturbation> {
    if reference.shape() != image.shape() {
        return Err(Error::arg(format!(
            "reference image has shape {:?}, image has {:?}",
            reference.shape(),
            image.shape()
        )));
    }
    let patch = model.patch_size();
    let g = patch_grid(image, patch)?;
    let p = g * g;
    let mut current = image.clone();
    let mut grid = rank(&current)?;
    if grid.len() != p {
        return Err(Error::dim(format!(
            "ranking grid has {} entries, image has {p} patches",
            grid.len()
        )));
    }
    let mut removed = vec![false; p];
    let mut order = Vec::with_capacity(p);
    let mut ys = vec![model.confidence(&current, class)? as f64];
    for step in 0..p {
        let t = pick(grid.data(), &removed, direction);
        removed[t] = true;
        order.push(t);
        replace_patches(&mut current, reference, &[t], patch)?;
        ys.push(model.confidence(&current, class)? as f64);
        if recompute && step + 1 < p {
            grid = rank(&current)?;
        }
    }
    let xs = (0..=p).map(|k| k as f64 / p as f64).collect();
    Ok(Perturbation {
        curve: MetricCurve::new(xs, ys, true)?,
        order,
    })
}

/// Perturbation test on the transformer. With a model-based ranking and
/// `recompute`, the map is regenerated on the perturbed image after every
/// step; fixed rankings are always used as given.
pub fn perturbation_test(
    net: &VisionTransformer,
    image: &Tensor,
    class: usize,
    ranking: Ranking<'_>,
    direction: PerturbDirection,
    reference: &Tensor,
    recompute: bool,
) -> Result<Perturbation> {
    match ranking {
        Ranking::Model(method) => {
            if !method.is_model_based() {
                return Err(Error::arg(format!(
                    "{method} maps cannot be recomputed from the network"
                )));
            }
            let mut rank = |img: &Tensor| explain(net, img, class, method).map(|m| m.grid);
            perturbation_test_with(
                net, image, class, reference, direction, recompute, &mut rank,
            )
        }
        Ranking::Fixed(grid) => {
            let grid = grid.clone();
            let mut rank = |_: &Tensor| Ok(grid.clone());
            perturbation_test_with(net, image, class, reference, direction, false, &mut rank)
        }
    }
}
