//! A small vision transformer: patch embedding, one class token, pre-norm
//! blocks, and a per-class sigmoid head.

pub mod bundle;
mod config;
mod model;
mod weights;

pub use config::VitConfig;
pub use model::{
    gelu, patchify, AttentionCapture, AttentionGradients, VisionTransformer, LAYER_NORM_EPS,
};
pub use weights::{BlockWeights, VitWeights, INIT_STD};
