//! Slow, obviously-correct reference computations. Nothing here depends on
//! `atnb-core`; tests convert their inputs to plain `f64` slices first.

#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod images;
pub mod linalg;
pub mod metrics;
pub mod reference_vit;
pub mod stats;
