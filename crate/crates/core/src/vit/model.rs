//! Forward pass with attention capture and the reverse pass that produces the
//! class-conditioned attention and feature gradients.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{matmul, matmul_nt, matmul_tn, softmax_rows, Tensor};

use super::{VitConfig, VitWeights};

pub const LAYER_NORM_EPS: f64 = 1e-6;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// What a forward pass records for the saliency methods.
#[derive(Clone, Debug)]
pub struct AttentionCapture {
    /// `attention[l][h]`: post-softmax `T×T` attention of head `h` in layer `l`.
    pub attention: Vec<Vec<Tensor>>,
    /// Patch-token rows of the final block's normalised input, `(T−1)×d`.
    /// This is the layer GradCAM taps.
    pub features: Tensor,
    /// Per-class sigmoid confidences.
    pub confidences: Vec<f32>,
    cache: Option<Box<ForwardCache>>,
}

impl AttentionCapture {
    /// Capture assembled by hand, e.g. from externally computed attention.
    /// Such a capture cannot be fed to [`VisionTransformer::backward`].
    pub fn from_parts(
        attention: Vec<Vec<Tensor>>,
        features: Tensor,
        confidences: Vec<f32>,
    ) -> Self {
        Self {
            attention,
            features,
            confidences,
            cache: None,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.attention.len()
    }

    /// Token count `T`, read off the first attention matrix.
    pub fn num_tokens(&self) -> usize {
        self.attention
            .first()
            .and_then(|l| l.first())
            .map_or(0, |a| a.shape()[0])
    }
}

/// Derivatives of one class confidence.
#[derive(Clone, Debug)]
pub struct AttentionGradients {
    /// `attention[l][h] = ∂y_c / ∂A[l][h]`.
    pub attention: Vec<Vec<Tensor>>,
    /// `∂y_c / ∂features`.
    pub features: Tensor,
    pub class: usize,
}

#[derive(Clone, Debug)]
struct NormCache {
    xhat: Tensor,
    rstd: Vec<f64>,
}

#[derive(Clone, Debug)]
struct BlockCache {
    norm1: NormCache,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    norm2: NormCache,
    pre_gelu: Tensor,
}

#[derive(Clone, Debug)]
struct ForwardCache {
    blocks: Vec<BlockCache>,
    final_norm: NormCache,
}

/// A configured network.
#[derive(Clone, Debug, PartialEq)]
pub struct VisionTransformer {
    pub config: VitConfig,
    pub weights: VitWeights,
}

impl VisionTransformer {
    pub fn new(config: VitConfig, weights: VitWeights) -> Result<Self> {
        config.validate()?;
        weights.check(&config)?;
        Ok(Self { config, weights })
    }

    /// Freshly initialised network, see [`VitWeights::init`].
    pub fn init(config: VitConfig, rng: &mut Rng) -> Result<Self> {
        let weights = VitWeights::init(&config, rng)?;
        Self::new(config, weights)
    }

    pub fn forward(&self, image: &Tensor) -> Result<AttentionCapture> {
        let cfg = &self.config;
        let w = &self.weights;
        let t = cfg.num_tokens();
        let d = cfg.embed_dim;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f32).sqrt();

        let patches = patchify(image, cfg)?;
        let embedded = linear(&patches, &w.patch_weight, &w.patch_bias)?;
        let mut z = Tensor::zeros(&[t, d]);
        for j in 0..d {
            z.set(0, j, w.cls_token.data()[j] + w.pos_embed.at(0, j));
        }
        for p in 0..cfg.num_patches() {
            for j in 0..d {
                z.set(p + 1, j, embedded.at(p, j) + w.pos_embed.at(p + 1, j));
            }
        }

        let mut attention = Vec::with_capacity(cfg.layers);
        let mut blocks = Vec::with_capacity(cfg.layers);
        let mut features = None;
        for (l, b) in w.blocks.iter().enumerate() {
            let (h, norm1) = layer_norm(&z, &b.ln1_gain, &b.ln1_bias)?;
            if l + 1 == cfg.layers {
                features = Some(rows(&h, 1, t));
            }
            let q = linear(&h, &b.wq, &b.bq)?;
            let k = linear(&h, &b.wk, &b.bk)?;
            let v = linear(&h, &b.wv, &b.bv)?;
            let mut heads = Vec::with_capacity(cfg.heads);
            let mut mixed = Tensor::zeros(&[t, d]);
            for hd in 0..cfg.heads {
                let (qh, kh, vh) = (
                    cols(&q, hd * dh, dh),
                    cols(&k, hd * dh, dh),
                    cols(&v, hd * dh, dh),
                );
                let a = softmax_rows(&matmul_nt(&qh, &kh)?.scale(scale))?;
                set_cols(&mut mixed, hd * dh, &matmul(&a, &vh)?);
                heads.push(a);
            }
            let z1 = z.add(&linear(&mixed, &b.wo, &b.bo)?)?;
            let (h2, norm2) = layer_norm(&z1, &b.ln2_gain, &b.ln2_bias)?;
            let pre_gelu = linear(&h2, &b.w1, &b.b1)?;
            let act = pre_gelu.map(gelu);
            z = z1.add(&linear(&act, &b.w2, &b.b2)?)?;
            attention.push(heads);
            blocks.push(BlockCache {
                norm1,
                q,
                k,
                v,
                norm2,
                pre_gelu,
            });
        }

        let cls = rows(&z, 0, 1);
        let (pooled, final_norm) = layer_norm(&cls, &w.norm_gain, &w.norm_bias)?;
        let logits = matmul_nt(&pooled, &w.head_weight)?;
        let confidences = logits
            .data()
            .iter()
            .zip(w.head_bias.data())
            .map(|(&l, &b)| sigmoid(l as f64 + b as f64) as f32)
            .collect();

        Ok(AttentionCapture {
            attention,
            features: features.expect("at least one layer"),
            confidences,
            cache: Some(Box::new(ForwardCache { blocks, final_norm })),
        })
    }

    /// Confidence of one class.
    pub fn confidence(&self, image: &Tensor, class: usize) -> Result<f32> {
        self.check_class(class)?;
        Ok(self.forward(image)?.confidences[class])
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.config.num_classes {
            return Err(Error::arg(format!(
                "class {class} out of range for {} classes",
                self.config.num_classes
            )));
        }
        Ok(())
    }

    /// Reverse-mode derivatives of `y_class` with respect to every
    /// post-softmax attention matrix (each treated as a free input feeding the
    /// value aggregation) and the final block's patch features.
    pub fn backward(&self, capture: &AttentionCapture, class: usize) -> Result<AttentionGradients> {
        self.check_class(class)?;
        let cfg = &self.config;
        let w = &self.weights;
        let t = cfg.num_tokens();
        let d = cfg.embed_dim;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let cache = capture
            .cache
            .as_deref()
            .ok_or_else(|| Error::arg("capture carries no activations; run forward first"))?;
        if capture.attention.len() != cfg.layers
            || cache.blocks.len() != cfg.layers
            || capture.confidences.len() != cfg.num_classes
            || capture
                .attention
                .iter()
                .any(|l| l.len() != cfg.heads || l.iter().any(|a| a.shape() != [t, t]))
            || cache.blocks.iter().any(|b| b.q.shape() != [t, d])
        {
            return Err(Error::dim("capture does not match this network"));
        }

        let y = capture.confidences[class] as f64;
        let dlogit = y * (1.0 - y);
        let dpooled = Tensor::from_fn(1, d, |_, j| {
            (dlogit * w.head_weight.at(class, j) as f64) as f32
        });
        let dcls = layer_norm_backward(&dpooled, &cache.final_norm, &w.norm_gain);
        let mut dz = Tensor::zeros(&[t, d]);
        dz.row_mut(0).copy_from_slice(dcls.row(0));

        let mut grads = vec![Vec::new(); cfg.layers];
        let mut dfeatures = None;
        for l in (0..cfg.layers).rev() {
            let b = &w.blocks[l];
            let bc = &cache.blocks[l];

            // MLP branch: z2 = z1 + W2·gelu(W1·norm2(z1))
            let mut dact = matmul_nt(&dz, &b.w2)?;
            for (g, &u) in dact.data_mut().iter_mut().zip(bc.pre_gelu.data()) {
                *g = (*g as f64 * gelu_grad(u as f64)) as f32;
            }
            let dh2 = matmul_nt(&dact, &b.w1)?;
            let dz1 = dz.add(&layer_norm_backward(&dh2, &bc.norm2, &b.ln2_gain))?;

            // Attention branch: z1 = z + Wo·concat_h(A_h · V_h)
            let dmixed = matmul_nt(&dz1, &b.wo)?;
            let mut dq = Tensor::zeros(&[t, d]);
            let mut dk = Tensor::zeros(&[t, d]);
            let mut dv = Tensor::zeros(&[t, d]);
            let mut layer_grads = Vec::with_capacity(cfg.heads);
            for hd in 0..cfg.heads {
                let off = hd * dh;
                let a = &capture.attention[l][hd];
                let dout = cols(&dmixed, off, dh);
                let (qh, kh, vh) = (
                    cols(&bc.q, off, dh),
                    cols(&bc.k, off, dh),
                    cols(&bc.v, off, dh),
                );
                let da = matmul_nt(&dout, &vh)?;
                set_cols(&mut dv, off, &matmul_tn(a, &dout)?);
                let ds = softmax_backward(a, &da, scale);
                set_cols(&mut dq, off, &matmul(&ds, &kh)?);
                set_cols(&mut dk, off, &matmul_tn(&ds, &qh)?);
                layer_grads.push(da);
            }
            grads[l] = layer_grads;

            let dh = matmul_nt(&dq, &b.wq)?
                .add(&matmul_nt(&dk, &b.wk)?)?
                .add(&matmul_nt(&dv, &b.wv)?)?;
            if l + 1 == cfg.layers {
                dfeatures = Some(rows(&dh, 1, t));
            }
            dz = dz1.add(&layer_norm_backward(&dh, &bc.norm1, &b.ln1_gain))?;
        }

        Ok(AttentionGradients {
            attention: grads,
            features: dfeatures.expect("at least one layer"),
            class,
        })
    }

    /// Index of the pool image with the lowest confidence for `class`; ties go
    /// to the lowest index.
    pub fn select_reference(&self, pool: &[Tensor], class: usize) -> Result<usize> {
        if pool.is_empty() {
            return Err(Error::arg("reference pool is empty"));
        }
        let mut best = (0, f32::INFINITY);
        for (i, img) in pool.iter().enumerate() {
            let y = self.confidence(img, class)?;
            if y < best.1 {
                best = (i, y);
            }
        }
        Ok(best.0)
    }
}

/// Cut an `S×S` image into `(S/p)²` row-major patches of `p²` row-major pixels.
pub fn patchify(image: &Tensor, cfg: &VitConfig) -> Result<Tensor> {
    let (h, w) = image.dims2()?;
    if h != cfg.image_size || w != cfg.image_size {
        return Err(Error::dim(format!(
            "image is {h}x{w}, network expects {0}x{0}",
            cfg.image_size
        )));
    }
    let p = cfg.patch_size;
    let g = cfg.grid();
    Ok(Tensor::from_fn(g * g, p * p, |idx, k| {
        let (py, px) = (idx / g, idx % g);
        image.at(py * p + k / p, px * p + k % p)
    }))
}

fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut out = matmul(x, weight)?;
    let n = bias.len();
    for chunk in out.data_mut().chunks_exact_mut(n) {
        for (o, &b) in chunk.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

fn rows(t: &Tensor, start: usize, end: usize) -> Tensor {
    let c = t.shape()[1];
    Tensor::new(vec![end - start, c], t.data()[start * c..end * c].to_vec())
        .expect("valid row range")
}

fn cols(t: &Tensor, start: usize, len: usize) -> Tensor {
    let r = t.shape()[0];
    Tensor::from_fn(r, len, |i, j| t.at(i, start + j))
}

fn set_cols(t: &mut Tensor, start: usize, src: &Tensor) {
    let (r, c) = src.dims2().expect("matrix");
    for i in 0..r {
        t.row_mut(i)[start..start + c].copy_from_slice(src.row(i));
    }
}

fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<(Tensor, NormCache)> {
    let (r, c) = x.dims2()?;
    let mut out = Tensor::zeros(&[r, c]);
    let mut xhat = Tensor::zeros(&[r, c]);
    let mut rstd = Vec::with_capacity(r);
    for i in 0..r {
        let row = x.row(i);
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
        let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd.push(s);
        for (j, &v) in row.iter().enumerate() {
            let xh = (v as f64 - mean) * s;
            xhat.set(i, j, xh as f32);
            out.set(
                i,
                j,
                (xh * gain.data()[j] as f64 + bias.data()[j] as f64) as f32,
            );
        }
    }
    Ok((out, NormCache { xhat, rstd }))
}

fn layer_norm_backward(dy: &Tensor, cache: &NormCache, gain: &Tensor) -> Tensor {
    let (r, c) = dy.dims2().expect("matrix");
    let mut dx = Tensor::zeros(&[r, c]);
    for i in 0..r {
        let dyr = dy.row(i);
        if dyr.iter().all(|&v| v == 0.0) {
            continue;
        }
        let xh = cache.xhat.row(i);
        let dxhat: Vec<f64> = dyr
            .iter()
            .zip(gain.data())
            .map(|(&g, &w)| g as f64 * w as f64)
            .collect();
        let mean_d = dxhat.iter().sum::<f64>() / c as f64;
        let mean_dx = dxhat
            .iter()
            .zip(xh)
            .map(|(&a, &b)| a * b as f64)
            .sum::<f64>()
            / c as f64;
        let s = cache.rstd[i];
        for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
            *out = (s * (dxhat[j] - mean_d - xh[j] as f64 * mean_dx)) as f32;
        }
    }
    dx
}

/// Gradient through `A = softmax(scale · S)` given `dA`; returns `dS`.
fn softmax_backward(a: &Tensor, da: &Tensor, scale: f64) -> Tensor {
    let (r, c) = a.dims2().expect("matrix");
    let mut ds = Tensor::zeros(&[r, c]);
    for i in 0..r {
        let ar = a.row(i);
        let dar = da.row(i);
        let inner: f64 = ar.iter().zip(dar).map(|(&x, &y)| x as f64 * y as f64).sum();
        for (j, out) in ds.row_mut(i).iter_mut().enumerate() {
            *out = (ar[j] as f64 * (dar[j] as f64 - inner) * scale) as f32;
        }
    }
    ds
}

/// tanh approximation of GELU.
pub fn gelu(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())) as f32
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> VitConfig {
        VitConfig {
            image_size: 16,
            patch_size: 4,
            layers: 2,
            heads: 2,
            embed_dim: 16,
            mlp_dim: 24,
            num_classes: 3,
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let cfg = VitConfig::default();
        let net = VisionTransformer::init(cfg, &mut Rng::new(1)).unwrap();
        let img = Rng::new(2).uniform_tensor(&[64, 64], 0.0, 1.0);
        let cap = net.forward(&img).unwrap();
        assert_eq!(cap.attention.len(), 4);
        for layer in &cap.attention {
            for a in layer {
                for i in 0..65 {
                    let s: f64 = a.row(i).iter().map(|&v| v as f64).sum();
                    assert!((s - 1.0).abs() < 1e-5);
                }
            }
        }
        assert!(cap.confidences.iter().all(|&y| y > 0.0 && y < 1.0));
        assert_eq!(cap.features.shape(), &[64, 32]);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let cfg = small_config();
        let net = VisionTransformer::init(cfg, &mut Rng::new(5)).unwrap();
        let img = Rng::new(6).uniform_tensor(&[16, 16], 0.0, 1.0);
        let a = net.forward(&img).unwrap();
        let b = net.forward(&img).unwrap();
        assert_eq!(a.confidences, b.confidences);
        assert_eq!(a.attention, b.attention);
    }

    #[test]
    fn zero_network_is_constant() {
        let cfg = small_config();
        let net = VisionTransformer::new(cfg, VitWeights::zeros(&cfg).unwrap()).unwrap();
        let a = net.forward(&Tensor::zeros(&[16, 16])).unwrap();
        let b = net
            .forward(&Rng::new(1).uniform_tensor(&[16, 16], 0.0, 1.0))
            .unwrap();
        assert_eq!(a.confidences, b.confidences);
        assert!(a.confidences.iter().all(|&y| y == 0.5));
    }

    #[test]
    fn wrong_image_shape_is_a_dimension_error() {
        let net = VisionTransformer::init(small_config(), &mut Rng::new(1)).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros(&[8, 8])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn stale_capture_is_rejected() {
        let net = VisionTransformer::init(small_config(), &mut Rng::new(1)).unwrap();
        let other = VisionTransformer::init(VitConfig::default(), &mut Rng::new(1)).unwrap();
        let cap = other.forward(&Tensor::zeros(&[64, 64])).unwrap();
        assert!(matches!(net.backward(&cap, 0), Err(Error::Dimension(_))));
        let bare = AttentionCapture::from_parts(vec![], Tensor::zeros(&[1, 1]), vec![]);
        assert!(net.backward(&bare, 0).is_err());
        let cap = net.forward(&Tensor::zeros(&[16, 16])).unwrap();
        assert!(net.backward(&cap, 3).is_err());
    }

    #[test]
    fn dead_head_row_gives_zero_feature_gradient() {
        let mut cfg = small_config();
        cfg.layers = 1;
        let mut net = VisionTransformer::init(cfg, &mut Rng::new(8)).unwrap();
        net.weights.head_weight.row_mut(1).fill(0.0);
        let cap = net
            .forward(&Rng::new(9).uniform_tensor(&[16, 16], 0.0, 1.0))
            .unwrap();
        let g = net.backward(&cap, 1).unwrap();
        assert!(g.features.data().iter().all(|&v| v == 0.0));
        assert!(g.attention[0]
            .iter()
            .all(|a| a.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn gradients_ignore_other_head_rows() {
        let cfg = small_config();
        let net = VisionTransformer::init(cfg, &mut Rng::new(10)).unwrap();
        let mut altered = net.clone();
        altered
            .weights
            .head_weight
            .row_mut(2)
            .iter_mut()
            .for_each(|v| *v += 0.5);
        altered.weights.head_bias.data_mut()[0] -= 1.0;
        let img = Rng::new(11).uniform_tensor(&[16, 16], 0.0, 1.0);
        let a = net.backward(&net.forward(&img).unwrap(), 1).unwrap();
        let b = altered
            .backward(&altered.forward(&img).unwrap(), 1)
            .unwrap();
        assert_eq!(a.attention, b.attention);
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn last_layer_gradient_only_reaches_class_row() {
        let cfg = small_config();
        let net = VisionTransformer::init(cfg, &mut Rng::new(12)).unwrap();
        let img = Rng::new(13).uniform_tensor(&[16, 16], 0.0, 1.0);
        let g = net.backward(&net.forward(&img).unwrap(), 0).unwrap();
        for a in &g.attention[1] {
            assert!(a.row(0).iter().any(|&v| v != 0.0));
            assert!((1..17).all(|i| a.row(i).iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn reference_selection_rules() {
        let cfg = small_config();
        let net = VisionTransformer::init(cfg, &mut Rng::new(14)).unwrap();
        let img = Rng::new(15).uniform_tensor(&[16, 16], 0.0, 1.0);
        assert_eq!(
            net.select_reference(std::slice::from_ref(&img), 0).unwrap(),
            0
        );
        let pool = vec![img.clone(), img.clone()];
        assert_eq!(net.select_reference(&pool, 0).unwrap(), 0);
        assert!(net.select_reference(&[], 0).is_err());
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-5;
            let g = |v: f64| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh());
            let fd = (g(x + h) - g(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
