//! Test helpers shared by the core integration tests and the acceptance suite.
#![allow(dead_code)]

use atnb_core::{Tensor, VisionTransformer};
use atnb_oracles::reference_vit::{RefBlock, RefVit};

fn f64s(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

pub fn reference(net: &VisionTransformer) -> RefVit {
    let c = &net.config;
    let w = &net.weights;
    RefVit {
        image_size: c.image_size,
        patch_size: c.patch_size,
        heads: c.heads,
        embed_dim: c.embed_dim,
        mlp_dim: c.mlp_dim,
        num_classes: c.num_classes,
        patch_weight: f64s(&w.patch_weight),
        patch_bias: f64s(&w.patch_bias),
        pos_embed: f64s(&w.pos_embed),
        cls_token: f64s(&w.cls_token),
        blocks: w
            .blocks
            .iter()
            .map(|b| RefBlock {
                ln1_gain: f64s(&b.ln1_gain),
                ln1_bias: f64s(&b.ln1_bias),
                wq: f64s(&b.wq),
                bq: f64s(&b.bq),
                wk: f64s(&b.wk),
                bk: f64s(&b.bk),
                wv: f64s(&b.wv),
                bv: f64s(&b.bv),
                wo: f64s(&b.wo),
                bo: f64s(&b.bo),
                ln2_gain: f64s(&b.ln2_gain),
                ln2_bias: f64s(&b.ln2_bias),
                w1: f64s(&b.w1),
                b1: f64s(&b.b1),
                w2: f64s(&b.w2),
                b2: f64s(&b.b2),
            })
            .collect(),
        norm_gain: f64s(&w.norm_gain),
        norm_bias: f64s(&w.norm_bias),
        head_weight: f64s(&w.head_weight),
        head_bias: f64s(&w.head_bias),
    }
}

pub fn image_f64(img: &Tensor) -> Vec<f64> {
    f64s(img)
}

/// Multiply every non-gain parameter by `factor` so the network leaves the
/// near-linear regime of the default initialisation.
pub fn amplify(net: &mut VisionTransformer, factor: f32) {
    let w = &mut net.weights;
    let scale = |t: &mut Tensor| t.data_mut().iter_mut().for_each(|v| *v *= factor);
    scale(&mut w.patch_weight);
    scale(&mut w.pos_embed);
    scale(&mut w.cls_token);
    scale(&mut w.head_weight);
    for b in &mut w.blocks {
        for t in [
            &mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo, &mut b.w1, &mut b.w2,
        ] {
            scale(t);
        }
    }
}

pub const FD_EPS: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;
pub const ABS_TOL: f64 = 1e-6;

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: usize,
    /// Largest `|analytic − fd| / max(|fd|, ABS_TOL / REL_TOL)`.
    pub worst_ratio: f64,
    pub worst: String,
}

impl GradCheck {
    fn record(&mut self, analytic: f64, fd: f64, what: impl FnOnce() -> String) {
        self.checked += 1;
        let diff = (analytic - fd).abs();
        if diff > ABS_TOL.max(REL_TOL * fd.abs()) {
            self.failures += 1;
        }
        let ratio = diff / fd.abs().max(ABS_TOL / REL_TOL) / REL_TOL;
        if ratio > self.worst_ratio {
            self.worst_ratio = ratio;
            self.worst = format!("{} analytic={analytic:e} fd={fd:e}", what());
        }
    }
}

/// Compare every attention and feature gradient of `class` against central
/// differences of the reference network.
pub fn gradient_check(net: &VisionTransformer, image: &Tensor, class: usize) -> GradCheck {
    let reference = reference(net);
    let trace = reference.trace(&image_f64(image));
    let grads = net.backward(&net.forward(image).unwrap(), class).unwrap();
    let t = net.config.num_tokens();
    let mut report = GradCheck::default();
    for (l, layer) in grads.attention.iter().enumerate() {
        for (h, g) in layer.iter().enumerate() {
            for i in 0..t {
                for j in 0..t {
                    let fd = reference.attention_fd(&trace, l, h, i, j, FD_EPS, class);
                    report.record(g.at(i, j) as f64, fd, || format!("A[{l}][{h}][{i}][{j}]"));
                }
            }
        }
    }
    let (p, d) = grads.features.dims2().unwrap();
    for tok in 0..p {
        for k in 0..d {
            let fd = reference.feature_fd(&trace, tok, k, FD_EPS, class);
            report.record(grads.features.at(tok, k) as f64, fd, || {
                format!("F[{tok}][{k}]")
            });
        }
    }
    report
}
