//! Seeded chest-radiograph-like toy images with a pneumothorax mask, used by
//! the demo pipeline and tests in place of real data.

use std::fs;
use std::path::Path;

use crate::dataio::{
    save_manifest, write_pgm, BoxRegion, CaseRecord, Manifest, Split, CLASS_NAMES,
};
use crate::error::{Error, Result};
use crate::filters::gaussian_blur;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCase {
    pub image: Tensor,
    /// Binary pneumothorax mask; all zero when absent.
    pub mask: Tensor,
    /// Bounding box of the mask, if any.
    pub boxes: Vec<BoxRegion>,
    pub labels: [bool; 5],
}

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, x: f64, y: f64) -> bool {
    ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0
}

/// One `size×size` case. Each finding is present with probability ½.
pub fn synthetic_case(rng: &mut Rng, size: usize) -> SyntheticCase {
    let s = size as f64;
    let labels: [bool; 5] = std::array::from_fn(|_| rng.uniform() < 0.5);
    let [pneumo, cardio, consol, effusion, atelect] = labels;
    let heart_r = if cardio { 0.2 } else { 0.13 } * s;
    let side = if rng.uniform() < 0.5 { 0 } else { 1 };
    let lung_cx = [0.3 * s, 0.7 * s];
    let (lung_cy, lung_rx, lung_ry) = (0.48 * s, 0.16 * s, 0.3 * s);
    // Collapsed region: the outer band of one lung.
    let pt_depth = (0.25 + 0.2 * rng.uniform()) * lung_rx * 2.0;
    let consol_c = (
        lung_cx[1 - side] + (rng.uniform() - 0.5) * lung_rx,
        lung_cy + (rng.uniform() - 0.5) * lung_ry,
    );
    let rib_phase = rng.uniform() * std::f64::consts::TAU;

    let mut mask = Tensor::zeros(&[size, size]);
    let mut img = Tensor::from_fn(size, size, |yi, xi| {
        let (x, y) = (xi as f64 + 0.5, yi as f64 + 0.5);
        let mut v = 0.08;
        if ellipse(0.5 * s, 0.52 * s, 0.44 * s, 0.46 * s, x, y) {
            v = 0.55;
        }
        for (k, &cx) in lung_cx.iter().enumerate() {
            if ellipse(cx, lung_cy, lung_rx, lung_ry, x, y) {
                v = 0.25 + 0.06 * ((y / s * 22.0 + rib_phase).sin() * 0.5 + 0.5);
                let outer = if k == 0 {
                    cx - lung_rx + pt_depth
                } else {
                    cx + lung_rx - pt_depth
                };
                let in_band = if k == 0 { x < outer } else { x > outer };
                if pneumo && k == side && in_band && y < lung_cy + 0.3 * lung_ry {
                    v = 0.12;
                }
                if effusion && y > lung_cy + 0.55 * lung_ry {
                    v = 0.6;
                }
                if atelect && k != side && (y - (lung_cy + 0.2 * lung_ry)).abs() < 0.025 * s {
                    v = 0.5;
                }
            }
        }
        if ellipse(0.52 * s, 0.62 * s, heart_r, heart_r * 0.8, x, y) {
            v = 0.7;
        }
        if consol && ellipse(consol_c.0, consol_c.1, 0.07 * s, 0.07 * s, x, y) {
            v = v.max(0.62);
        }
        v as f32
    });
    if pneumo {
        for yi in 0..size {
            for xi in 0..size {
                if img.at(yi, xi) == 0.12 {
                    mask.set(yi, xi, 1.0);
                }
            }
        }
    }
    img = gaussian_blur(&img, 0.01 * s);
    let noise = rng.normal_tensor(&[size, size], 0.02);
    let img = img
        .add(&noise)
        .expect("same shape")
        .map(|v| v.clamp(0.0, 1.0));
    let boxes = bounding_box(&mask).into_iter().collect();
    SyntheticCase {
        image: img,
        mask,
        boxes,
        labels,
    }
}

fn bounding_box(mask: &Tensor) -> Option<BoxRegion> {
    let (h, w) = mask.dims2().ok()?;
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.at(y, x) > 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    (x1 > x0).then(|| BoxRegion {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    })
}

/// Write `n` cases (`case-XXX.pgm`, plus `case-XXX.mask.pgm` for positives)
/// and `manifest.jsonl` into `dir`. Case `i` draws from `Rng::stream(seed, i)`.
pub fn write_synthetic_manifest(
    dir: &Path,
    n: usize,
    size: usize,
    seed: u64,
    split: Split,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::new(split, dir);
    debug_assert_eq!(manifest.classes.len(), CLASS_NAMES.len());
    for i in 0..n {
        let case = synthetic_case(&mut Rng::stream(seed, i as u64), size);
        let id = format!("case-{i:03}");
        let image = format!("{id}.pgm");
        write_pgm(&case.image, &dir.join(&image))?;
        let mask = if case.labels[0] {
            let name = format!("{id}.mask.pgm");
            write_pgm(&case.mask, &dir.join(&name))?;
            Some(name.into())
        } else {
            None
        };
        manifest.cases.push(CaseRecord {
            id,
            image: image.into(),
            labels: case.labels.to_vec(),
            mask,
            boxes: case.boxes,
            confidence: None,
            calibrated: None,
        });
    }
    save_manifest(&manifest, &dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_are_seeded_and_bounded() {
        let a = synthetic_case(&mut Rng::new(4), 64);
        let b = synthetic_case(&mut Rng::new(4), 64);
        assert_eq!(a, b);
        assert!(a.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn mask_present_iff_pneumothorax() {
        for seed in 0..20 {
            let c = synthetic_case(&mut Rng::new(seed), 64);
            assert_eq!(c.mask.sum() > 0.0, c.labels[0], "seed {seed}");
            assert_eq!(c.boxes.len(), c.labels[0] as usize);
        }
    }
}
