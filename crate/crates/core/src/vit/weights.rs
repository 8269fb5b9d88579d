use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::VitConfig;

/// Standard deviation of the normal initialisation used for every projection.
pub const INIT_STD: f32 = 0.02;

/// Parameters of one pre-norm transformer block. Linear weights are stored
/// `in × out`, so a layer computes `x · W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VitWeights {
    /// `patch_dim × embed_dim`
    pub patch_weight: Tensor,
    pub patch_bias: Tensor,
    /// `tokens × embed_dim`, row 0 belongs to the class token.
    pub pos_embed: Tensor,
    pub cls_token: Tensor,
    pub blocks: Vec<BlockWeights>,
    pub norm_gain: Tensor,
    pub norm_bias: Tensor,
    /// `num_classes × embed_dim`; row `c` produces the logit of class `c`.
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

/// Expected shape of every named parameter.
pub(crate) fn expected_shapes(config: &VitConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.embed_dim;
    let m = config.mlp_dim;
    let mut out = vec![
        (
            "patch_embed.weight".to_string(),
            vec![config.patch_dim(), d],
        ),
        ("patch_embed.bias".to_string(), vec![d]),
        ("pos_embed".to_string(), vec![config.num_tokens(), d]),
        ("cls_token".to_string(), vec![d]),
    ];
    for l in 0..config.layers {
        let p = |s: &str| format!("blocks.{l}.{s}");
        out.extend([
            (p("norm1.gain"), vec![d]),
            (p("norm1.bias"), vec![d]),
            (p("attn.q.weight"), vec![d, d]),
            (p("attn.q.bias"), vec![d]),
            (p("attn.k.weight"), vec![d, d]),
            (p("attn.k.bias"), vec![d]),
            (p("attn.v.weight"), vec![d, d]),
            (p("attn.v.bias"), vec![d]),
            (p("attn.proj.weight"), vec![d, d]),
            (p("attn.proj.bias"), vec![d]),
            (p("norm2.gain"), vec![d]),
            (p("norm2.bias"), vec![d]),
            (p("mlp.fc1.weight"), vec![d, m]),
            (p("mlp.fc1.bias"), vec![m]),
            (p("mlp.fc2.weight"), vec![m, d]),
            (p("mlp.fc2.bias"), vec![d]),
        ]);
    }
    out.extend([
        ("norm.gain".to_string(), vec![d]),
        ("norm.bias".to_string(), vec![d]),
        ("head.weight".to_string(), vec![config.num_classes, d]),
        ("head.bias".to_string(), vec![config.num_classes]),
    ]);
    out
}

impl VitWeights {
    /// Normal(0, 0.02) projections, embeddings and class token; zero biases;
    /// unit layer-norm gains.
    pub fn init(config: &VitConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let shapes = expected_shapes(config);
        let tensors = shapes
            .iter()
            .map(|(name, shape)| {
                if name.ends_with(".gain") {
                    Tensor::full(shape, 1.0)
                } else if name.ends_with(".bias") {
                    Tensor::zeros(shape)
                } else {
                    rng.normal_tensor(shape, INIT_STD)
                }
            })
            .collect();
        Self::from_named(config, tensors)
    }

    /// Every parameter zero, layer-norm gains included. The resulting network
    /// is a constant function of its input.
    pub fn zeros(config: &VitConfig) -> Result<Self> {
        config.validate()?;
        let tensors = expected_shapes(config)
            .iter()
            .map(|(_, shape)| Tensor::zeros(shape))
            .collect();
        Self::from_named(config, tensors)
    }

    /// Build from tensors listed in [`VitWeights::names`] order.
    pub fn from_named(config: &VitConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let shapes = expected_shapes(config);
        if tensors.len() != shapes.len() {
            return Err(Error::dim(format!(
                "expected {} weight tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::dim(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::arg(format!("{name}: non-finite entries")));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        let patch_weight = next();
        let patch_bias = next();
        let pos_embed = next();
        let cls_token = next();
        let blocks = (0..config.layers)
            .map(|_| BlockWeights {
                ln1_gain: next(),
                ln1_bias: next(),
                wq: next(),
                bq: next(),
                wk: next(),
                bk: next(),
                wv: next(),
                bv: next(),
                wo: next(),
                bo: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                w1: next(),
                b1: next(),
                w2: next(),
                b2: next(),
            })
            .collect();
        Ok(Self {
            patch_weight,
            patch_bias,
            pos_embed,
            cls_token,
            blocks,
            norm_gain: next(),
            norm_bias: next(),
            head_weight: next(),
            head_bias: next(),
        })
    }

    pub fn names(config: &VitConfig) -> Vec<String> {
        expected_shapes(config)
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    /// Parameters in [`VitWeights::names`] order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![
            &self.patch_weight,
            &self.patch_bias,
            &self.pos_embed,
            &self.cls_token,
        ];
        for b in &self.blocks {
            out.extend([
                &b.ln1_gain,
                &b.ln1_bias,
                &b.wq,
                &b.bq,
                &b.wk,
                &b.bk,
                &b.wv,
                &b.bv,
                &b.wo,
                &b.bo,
                &b.ln2_gain,
                &b.ln2_bias,
                &b.w1,
                &b.b1,
                &b.w2,
                &b.b2,
            ]);
        }
        out.extend([
            &self.norm_gain,
            &self.norm_bias,
            &self.head_weight,
            &self.head_bias,
        ]);
        out
    }

    /// Check that the weights belong to `config`.
    pub fn check(&self, config: &VitConfig) -> Result<()> {
        let shapes = expected_shapes(config);
        let tensors = self.tensors();
        if tensors.len() != shapes.len() {
            return Err(Error::dim(format!(
                "weights hold {} tensors, config needs {}",
                tensors.len(),
                shapes.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::dim(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}
