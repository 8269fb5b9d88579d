//! A second, straight-line `f64` implementation of the transformer forward
//! pass, plus finite-difference probes that re-run the network from a
//! perturbed attention entry or feature entry.
//!
//! Perturbed runs only recompute what the perturbation can reach: a change to
//! `A[l][h][i][j]` touches token `i` of layer `l`, then every token of the
//! following layers, and only the class token of the last layer. The first
//! layer after a single-token change updates the other rows' softmax
//! incrementally (one score per row changes). `brute_perturbed_attention`
//! does the same computation the slow way and the module's tests check the
//! two agree.

const EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

#[derive(Clone, Debug)]
pub struct RefBlock {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub wq: Vec<f64>,
    pub bq: Vec<f64>,
    pub wk: Vec<f64>,
    pub bk: Vec<f64>,
    pub wv: Vec<f64>,
    pub bv: Vec<f64>,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Weights laid out exactly like the production model: linear weights are
/// `in × out` row-major, `head_weight` is `classes × d`.
#[derive(Clone, Debug)]
pub struct RefVit {
    pub image_size: usize,
    pub patch_size: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub mlp_dim: usize,
    pub num_classes: usize,
    pub patch_weight: Vec<f64>,
    pub patch_bias: Vec<f64>,
    pub pos_embed: Vec<f64>,
    pub cls_token: Vec<f64>,
    pub blocks: Vec<RefBlock>,
    pub norm_gain: Vec<f64>,
    pub norm_bias: Vec<f64>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LayerTrace {
    pub input: Vec<f64>,
    pub h: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// Scaled pre-softmax scores per head, `T×T`.
    pub scores: Vec<Vec<f64>>,
    pub row_max: Vec<Vec<f64>>,
    pub row_sum: Vec<Vec<f64>>,
    /// Post-softmax attention per head, `T×T`.
    pub attn: Vec<Vec<f64>>,
    pub mixed: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub layers: Vec<LayerTrace>,
    pub confidences: Vec<f64>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn layer_norm_row(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let r = 1.0 / (var + EPS).sqrt();
    x.iter()
        .zip(g.iter().zip(b))
        .map(|(v, (g, b))| (v - mean) * r * g + b)
        .collect()
}

/// `x (1×inp) · w (inp×out) + b`
fn affine_row(x: &[f64], w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for (p, &xp) in x.iter().enumerate() {
        for (yc, wc) in y.iter_mut().zip(&w[p * out..(p + 1) * out]) {
            *yc += xp * wc;
        }
    }
    y
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl RefVit {
    pub fn tokens(&self) -> usize {
        let g = self.image_size / self.patch_size;
        g * g + 1
    }

    fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    fn scale(&self) -> f64 {
        1.0 / (self.head_dim() as f64).sqrt()
    }

    fn embed(&self, image: &[f64]) -> Vec<f64> {
        let d = self.embed_dim;
        let p = self.patch_size;
        let g = self.image_size / p;
        let t = self.tokens();
        let mut z = vec![0.0; t * d];
        for j in 0..d {
            z[j] = self.cls_token[j] + self.pos_embed[j];
        }
        for py in 0..g {
            for px in 0..g {
                let tok = py * g + px + 1;
                let mut patch = Vec::with_capacity(p * p);
                for y in 0..p {
                    for x in 0..p {
                        patch.push(image[(py * p + y) * self.image_size + px * p + x]);
                    }
                }
                let e = affine_row(&patch, &self.patch_weight, &self.patch_bias, d);
                for j in 0..d {
                    z[tok * d + j] = e[j] + self.pos_embed[tok * d + j];
                }
            }
        }
        z
    }

    /// Output projection, residual, and MLP for one token.
    fn finish_row(&self, b: &RefBlock, z_in: &[f64], mixed: &[f64]) -> Vec<f64> {
        let d = self.embed_dim;
        let a = affine_row(mixed, &b.wo, &b.bo, d);
        let z1: Vec<f64> = z_in.iter().zip(&a).map(|(x, y)| x + y).collect();
        let h2 = layer_norm_row(&z1, &b.ln2_gain, &b.ln2_bias);
        let u: Vec<f64> = affine_row(&h2, &b.w1, &b.b1, self.mlp_dim)
            .into_iter()
            .map(gelu)
            .collect();
        let m = affine_row(&u, &b.w2, &b.b2, d);
        z1.iter().zip(&m).map(|(x, y)| x + y).collect()
    }

    fn head(&self, z_cls: &[f64]) -> Vec<f64> {
        let d = self.embed_dim;
        let f = layer_norm_row(z_cls, &self.norm_gain, &self.norm_bias);
        (0..self.num_classes)
            .map(|c| {
                let logit = dot(&f, &self.head_weight[c * d..(c + 1) * d]) + self.head_bias[c];
                1.0 / (1.0 + (-logit).exp())
            })
            .collect()
    }

    fn layer_full(&self, b: &RefBlock, z: &[f64]) -> LayerTrace {
        let d = self.embed_dim;
        let t = self.tokens();
        let dh = self.head_dim();
        let scale = self.scale();
        let mut h = Vec::with_capacity(t * d);
        for r in 0..t {
            h.extend(layer_norm_row(
                &z[r * d..(r + 1) * d],
                &b.ln1_gain,
                &b.ln1_bias,
            ));
        }
        let proj = |w: &[f64], bias: &[f64]| -> Vec<f64> {
            (0..t)
                .flat_map(|r| affine_row(&h[r * d..(r + 1) * d], w, bias, d))
                .collect()
        };
        let q = proj(&b.wq, &b.bq);
        let k = proj(&b.wk, &b.bk);
        let v = proj(&b.wv, &b.bv);
        let mut scores = Vec::new();
        let mut row_max = Vec::new();
        let mut row_sum = Vec::new();
        let mut attn = Vec::new();
        let mut mixed = vec![0.0; t * d];
        for hd in 0..self.heads {
            let off = hd * dh;
            let mut s = vec![0.0; t * t];
            let mut a = vec![0.0; t * t];
            let mut mx = vec![0.0; t];
            let mut sm = vec![0.0; t];
            for r in 0..t {
                for c in 0..t {
                    s[r * t + c] = dot(
                        &q[r * d + off..r * d + off + dh],
                        &k[c * d + off..c * d + off + dh],
                    ) * scale;
                }
                let m = s[r * t..(r + 1) * t]
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut z_r = 0.0;
                for c in 0..t {
                    a[r * t + c] = (s[r * t + c] - m).exp();
                    z_r += a[r * t + c];
                }
                for c in 0..t {
                    a[r * t + c] /= z_r;
                    for e in 0..dh {
                        mixed[r * d + off + e] += a[r * t + c] * v[c * d + off + e];
                    }
                }
                mx[r] = m;
                sm[r] = z_r;
            }
            scores.push(s);
            row_max.push(mx);
            row_sum.push(sm);
            attn.push(a);
        }
        let output = (0..t)
            .flat_map(|r| self.finish_row(b, &z[r * d..(r + 1) * d], &mixed[r * d..(r + 1) * d]))
            .collect();
        LayerTrace {
            input: z.to_vec(),
            h,
            q,
            k,
            v,
            scores,
            row_max,
            row_sum,
            attn,
            mixed,
            output,
        }
    }

    /// Layer output only, without keeping the intermediate trace.
    fn layer_output(&self, b: &RefBlock, z: &[f64]) -> Vec<f64> {
        let d = self.embed_dim;
        let t = self.tokens();
        let dh = self.head_dim();
        let scale = self.scale();
        let mut q = Vec::with_capacity(t * d);
        let mut k = Vec::with_capacity(t * d);
        let mut v = Vec::with_capacity(t * d);
        for r in 0..t {
            let h = layer_norm_row(&z[r * d..(r + 1) * d], &b.ln1_gain, &b.ln1_bias);
            q.extend(affine_row(&h, &b.wq, &b.bq, d));
            k.extend(affine_row(&h, &b.wk, &b.bk, d));
            v.extend(affine_row(&h, &b.wv, &b.bv, d));
        }
        let mut out = Vec::with_capacity(t * d);
        let mut s = vec![0.0; t];
        let mut mixed = vec![0.0; d];
        for r in 0..t {
            mixed.iter_mut().for_each(|m| *m = 0.0);
            for hd in 0..self.heads {
                let off = hd * dh;
                let qr = &q[r * d + off..r * d + off + dh];
                for (c, sc) in s.iter_mut().enumerate() {
                    *sc = dot(qr, &k[c * d + off..c * d + off + dh]) * scale;
                }
                let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut zs = 0.0;
                for sc in s.iter_mut() {
                    *sc = (*sc - mx).exp();
                    zs += *sc;
                }
                let dst = &mut mixed[off..off + dh];
                for (c, &e) in s.iter().enumerate() {
                    let w = e / zs;
                    for (m, &vc) in dst.iter_mut().zip(&v[c * d + off..c * d + off + dh]) {
                        *m += w * vc;
                    }
                }
            }
            out.extend(self.finish_row(b, &z[r * d..(r + 1) * d], &mixed));
        }
        out
    }

    pub fn trace(&self, image: &[f64]) -> Trace {
        let d = self.embed_dim;
        let mut z = self.embed(image);
        let mut layers = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let lt = self.layer_full(b, &z);
            z = lt.output.clone();
            layers.push(lt);
        }
        Trace {
            layers,
            confidences: self.head(&z[..d]),
        }
    }

    pub fn confidences(&self, image: &[f64]) -> Vec<f64> {
        self.trace(image).confidences
    }

    /// Layer `m` re-run on an input that differs from the traced one only in
    /// row `i`. Returns the layer output.
    fn layer_one_row_changed(&self, m: usize, lt: &LayerTrace, z: &[f64], i: usize) -> Vec<f64> {
        let b = &self.blocks[m];
        let d = self.embed_dim;
        let t = self.tokens();
        let dh = self.head_dim();
        let scale = self.scale();
        let hi = layer_norm_row(&z[i * d..(i + 1) * d], &b.ln1_gain, &b.ln1_bias);
        let qi = affine_row(&hi, &b.wq, &b.bq, d);
        let ki = affine_row(&hi, &b.wk, &b.bk, d);
        let vi = affine_row(&hi, &b.wv, &b.bv, d);
        let mut mixed = lt.mixed.clone();
        for hd in 0..self.heads {
            let off = hd * dh;
            for r in 0..t {
                if r == i {
                    continue;
                }
                let s_new = dot(&lt.q[r * d + off..r * d + off + dh], &ki[off..off + dh]) * scale;
                let s_old = lt.scores[hd][r * t + i];
                let mx = lt.row_max[hd][r];
                let z_old = lt.row_sum[hd][r];
                let e_old = (s_old - mx).exp();
                let e_new = (s_new - mx).exp();
                let z_new = z_old - e_old + e_new;
                for e in 0..dh {
                    let idx = r * d + off + e;
                    mixed[idx] = (z_old * lt.mixed[idx] - e_old * lt.v[i * d + off + e]
                        + e_new * vi[off + e])
                        / z_new;
                }
            }
            let key = |c: usize| -> &[f64] {
                if c == i {
                    &ki[off..off + dh]
                } else {
                    &lt.k[c * d + off..c * d + off + dh]
                }
            };
            let s: Vec<f64> = (0..t)
                .map(|c| dot(&qi[off..off + dh], key(c)) * scale)
                .collect();
            let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
            let zs: f64 = e.iter().sum();
            for j in 0..dh {
                let mut acc = 0.0;
                for c in 0..t {
                    let vc = if c == i {
                        vi[off + j]
                    } else {
                        lt.v[c * d + off + j]
                    };
                    acc += e[c] / zs * vc;
                }
                mixed[i * d + off + j] = acc;
            }
        }
        (0..t)
            .flat_map(|r| self.finish_row(b, &z[r * d..(r + 1) * d], &mixed[r * d..(r + 1) * d]))
            .collect()
    }

    /// Last layer evaluated for the class token only. `changed` names the one
    /// input row that differs from the trace, if any; otherwise every row is
    /// recomputed.
    fn last_layer(&self, tr: &Trace, z: &[f64], changed: Option<usize>) -> Vec<f64> {
        let m = self.blocks.len() - 1;
        let b = &self.blocks[m];
        let lt = &tr.layers[m];
        let d = self.embed_dim;
        let t = self.tokens();
        let (k, v, q0) = match changed {
            Some(i) => {
                let hi = layer_norm_row(&z[i * d..(i + 1) * d], &b.ln1_gain, &b.ln1_bias);
                let mut k = lt.k.clone();
                let mut v = lt.v.clone();
                k[i * d..(i + 1) * d].copy_from_slice(&affine_row(&hi, &b.wk, &b.bk, d));
                v[i * d..(i + 1) * d].copy_from_slice(&affine_row(&hi, &b.wv, &b.bv, d));
                let q0 = if i == 0 {
                    affine_row(&hi, &b.wq, &b.bq, d)
                } else {
                    lt.q[..d].to_vec()
                };
                (k, v, q0)
            }
            None => {
                let mut k = Vec::with_capacity(t * d);
                let mut v = Vec::with_capacity(t * d);
                let mut q0 = Vec::new();
                for r in 0..t {
                    let hr = layer_norm_row(&z[r * d..(r + 1) * d], &b.ln1_gain, &b.ln1_bias);
                    k.extend(affine_row(&hr, &b.wk, &b.bk, d));
                    v.extend(affine_row(&hr, &b.wv, &b.bv, d));
                    if r == 0 {
                        q0 = affine_row(&hr, &b.wq, &b.bq, d);
                    }
                }
                (k, v, q0)
            }
        };
        self.class_row_output(b, &z[..d], &q0, &k, &v)
    }

    fn class_row_output(
        &self,
        b: &RefBlock,
        z0: &[f64],
        q0: &[f64],
        k: &[f64],
        v: &[f64],
    ) -> Vec<f64> {
        let d = self.embed_dim;
        let t = self.tokens();
        let dh = self.head_dim();
        let scale = self.scale();
        let mut mixed0 = vec![0.0; d];
        for hd in 0..self.heads {
            let off = hd * dh;
            let s: Vec<f64> = (0..t)
                .map(|c| dot(&q0[off..off + dh], &k[c * d + off..c * d + off + dh]) * scale)
                .collect();
            let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
            let zs: f64 = e.iter().sum();
            for c in 0..t {
                for j in 0..dh {
                    mixed0[off + j] += e[c] / zs * v[c * d + off + j];
                }
            }
        }
        let out0 = self.finish_row(b, z0, &mixed0);
        self.head(&out0)
    }

    /// Confidences after adding `delta` to `A[layer][head][i][j]` and
    /// re-running everything downstream of the value aggregation.
    pub fn perturbed_attention(
        &self,
        tr: &Trace,
        layer: usize,
        head: usize,
        i: usize,
        j: usize,
        delta: f64,
    ) -> Vec<f64> {
        let d = self.embed_dim;
        let dh = self.head_dim();
        let last = self.blocks.len() - 1;
        let lt = &tr.layers[layer];
        let mut mixed_i = lt.mixed[i * d..(i + 1) * d].to_vec();
        for e in 0..dh {
            mixed_i[head * dh + e] += delta * lt.v[j * d + head * dh + e];
        }
        let b = &self.blocks[layer];
        let row = self.finish_row(b, &lt.input[i * d..(i + 1) * d], &mixed_i);
        if layer == last {
            if i != 0 {
                return tr.confidences.clone();
            }
            return self.head(&row);
        }
        let mut z = lt.output.clone();
        z[i * d..(i + 1) * d].copy_from_slice(&row);
        let mut changed = Some(i);
        for m in layer + 1..last {
            z = match changed {
                Some(r) => self.layer_one_row_changed(m, &tr.layers[m], &z, r),
                None => self.layer_output(&self.blocks[m], &z),
            };
            changed = None;
        }
        self.last_layer(tr, &z, changed)
    }

    /// Same as [`RefVit::perturbed_attention`] but recomputing every layer in
    /// full from the perturbed point.
    pub fn brute_perturbed_attention(
        &self,
        tr: &Trace,
        layer: usize,
        head: usize,
        i: usize,
        j: usize,
        delta: f64,
    ) -> Vec<f64> {
        let d = self.embed_dim;
        let t = self.tokens();
        let dh = self.head_dim();
        let lt = &tr.layers[layer];
        let mut a = lt.attn.clone();
        a[head][i * t + j] += delta;
        let mut mixed = vec![0.0; t * d];
        for hd in 0..self.heads {
            for r in 0..t {
                for c in 0..t {
                    for e in 0..dh {
                        mixed[r * d + hd * dh + e] += a[hd][r * t + c] * lt.v[c * d + hd * dh + e];
                    }
                }
            }
        }
        let b = &self.blocks[layer];
        let mut z: Vec<f64> = (0..t)
            .flat_map(|r| {
                self.finish_row(b, &lt.input[r * d..(r + 1) * d], &mixed[r * d..(r + 1) * d])
            })
            .collect();
        for blk in &self.blocks[layer + 1..] {
            z = self.layer_full(blk, &z).output;
            debug_assert_eq!(z.len(), t * d);
        }
        self.head(&z[..d])
    }

    /// Central difference of `y_class` with respect to `A[layer][head][i][j]`.
    pub fn attention_fd(
        &self,
        tr: &Trace,
        layer: usize,
        head: usize,
        i: usize,
        j: usize,
        eps: f64,
        class: usize,
    ) -> f64 {
        let plus = self.perturbed_attention(tr, layer, head, i, j, eps)[class];
        let minus = self.perturbed_attention(tr, layer, head, i, j, -eps)[class];
        (plus - minus) / (2.0 * eps)
    }

    /// Confidences after adding `delta` to entry `k` of patch token `patch`
    /// in the final block's normalised input.
    pub fn perturbed_feature(&self, tr: &Trace, patch: usize, k: usize, delta: f64) -> Vec<f64> {
        let m = self.blocks.len() - 1;
        let b = &self.blocks[m];
        let lt = &tr.layers[m];
        let d = self.embed_dim;
        let tok = patch + 1;
        let mut h = lt.h[tok * d..(tok + 1) * d].to_vec();
        h[k] += delta;
        let mut kk = lt.k.clone();
        let mut vv = lt.v.clone();
        kk[tok * d..(tok + 1) * d].copy_from_slice(&affine_row(&h, &b.wk, &b.bk, d));
        vv[tok * d..(tok + 1) * d].copy_from_slice(&affine_row(&h, &b.wv, &b.bv, d));
        self.class_row_output(b, &lt.input[..d], &lt.q[..d], &kk, &vv)
    }

    pub fn feature_fd(&self, tr: &Trace, patch: usize, k: usize, eps: f64, class: usize) -> f64 {
        let plus = self.perturbed_feature(tr, patch, k, eps)[class];
        let minus = self.perturbed_feature(tr, patch, k, -eps)[class];
        (plus - minus) / (2.0 * eps)
    }

    /// Deterministic pseudo-random weights for self-tests.
    pub fn random(
        image_size: usize,
        patch_size: usize,
        layers: usize,
        heads: usize,
        d: usize,
        mlp: usize,
        classes: usize,
        seed: u64,
    ) -> Self {
        let mut state = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = move |scale: f64| -> f64 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0) * scale
        };
        let mut v = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| next(s)).collect() };
        let t = (image_size / patch_size).pow(2) + 1;
        let blocks = (0..layers)
            .map(|_| RefBlock {
                ln1_gain: v(d, 0.5).into_iter().map(|x| 1.0 + x).collect(),
                ln1_bias: v(d, 0.1),
                wq: v(d * d, 0.4),
                bq: v(d, 0.1),
                wk: v(d * d, 0.4),
                bk: v(d, 0.1),
                wv: v(d * d, 0.4),
                bv: v(d, 0.1),
                wo: v(d * d, 0.4),
                bo: v(d, 0.1),
                ln2_gain: v(d, 0.5).into_iter().map(|x| 1.0 + x).collect(),
                ln2_bias: v(d, 0.1),
                w1: v(d * mlp, 0.4),
                b1: v(mlp, 0.1),
                w2: v(mlp * d, 0.4),
                b2: v(d, 0.1),
            })
            .collect();
        RefVit {
            image_size,
            patch_size,
            heads,
            embed_dim: d,
            mlp_dim: mlp,
            num_classes: classes,
            patch_weight: v(patch_size * patch_size * d, 0.3),
            patch_bias: v(d, 0.1),
            pos_embed: v(t * d, 0.3),
            cls_token: v(d, 0.3),
            blocks,
            norm_gain: v(d, 0.5).into_iter().map(|x| 1.0 + x).collect(),
            norm_bias: v(d, 0.1),
            head_weight: v(classes * d, 0.5),
            head_bias: v(classes, 0.1),
        }
    }
}
