//! Attention-based saliency maps for vision transformers and the tooling to
//! evaluate them: faithfulness metrics, map agreement, ROC statistics,
//! calibration, and the bookkeeping for a two-phase reader study.

pub mod atnb;
pub mod dataio;
pub mod error;
pub mod filters;
pub mod metrics;
pub mod rng;
pub mod saliency;
pub mod stats;
pub mod study;
pub mod synthetic;
pub mod tensor;
pub mod vit;

pub use error::{Error, Result};
pub use rng::Rng;
pub use saliency::{HeadMerge, MapMethod, SaliencyMap};
pub use tensor::Tensor;
pub use vit::{AttentionCapture, AttentionGradients, VisionTransformer, VitConfig, VitWeights};
