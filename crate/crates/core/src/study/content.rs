use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::plan::Assignment;
use super::StudyMethod;
use crate::dataio::{boxes_to_mask, read_pgm, Manifest};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::saliency::{artificial_map, explain, random_map, SaliencyMap, DEFAULT_OCTAVES};
use crate::tensor::Tensor;
use crate::vit::VisionTransformer;

/// 8-bit grayscale raster, row-major, base64 encoded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayPayload {
    pub width: usize,
    pub height: usize,
    pub data: String,
}

impl GrayPayload {
    /// Quantise values in `[0, 1]` (clamped) to bytes.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (height, width) = t.dims2()?;
        let bytes: Vec<u8> = t
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Ok(Self {
            width,
            height,
            data: STANDARD.encode(bytes),
        })
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Format(format!("invalid base64 payload: {e}")))?;
        if bytes.len() != self.width * self.height {
            return Err(Error::Format(format!(
                "payload holds {} bytes, expected {}x{}",
                bytes.len(),
                self.height,
                self.width
            )));
        }
        Tensor::new(
            vec![self.height, self.width],
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }
}

/// Phase-one screen: radiograph and calibrated model confidence only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase1Payload {
    pub session: String,
    pub case_id: String,
    pub index: usize,
    pub total: usize,
    pub phase: String,
    pub image: GrayPayload,
    pub confidence: f64,
}

/// Phase-two screen: adds the saliency overlay the client alpha-blends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase2Payload {
    pub session: String,
    pub case_id: String,
    pub index: usize,
    pub total: usize,
    pub phase: String,
    pub image: GrayPayload,
    pub confidence: f64,
    pub method: StudyMethod,
    pub overlay: GrayPayload,
}

/// Images and saliency maps for study cases.
pub trait CaseContent: Send + Sync {
    fn image(&self, case_id: &str) -> Result<Tensor>;

    /// Overlay for the case at position `index` of a session seeded `seed`.
    fn overlay(&self, assignment: &Assignment, seed: u64, index: usize) -> Result<SaliencyMap>;
}

/// Content read from a manifest, with model maps from `net` (class 0).
#[derive(Clone, Debug)]
pub struct ManifestContent {
    pub manifest: Manifest,
    pub net: VisionTransformer,
}

impl ManifestContent {
    pub fn new(manifest: Manifest, net: VisionTransformer) -> Self {
        Self { manifest, net }
    }

    fn record(&self, case_id: &str) -> Result<&crate::dataio::CaseRecord> {
        self.manifest
            .case(case_id)
            .ok_or_else(|| Error::arg(format!("case {case_id:?} not in manifest")))
    }
}

impl CaseContent for ManifestContent {
    fn image(&self, case_id: &str) -> Result<Tensor> {
        read_pgm(&self.manifest.resolve(&self.record(case_id)?.image))
    }

    fn overlay(&self, assignment: &Assignment, seed: u64, index: usize) -> Result<SaliencyMap> {
        let record = self.record(&assignment.case_id)?;
        let image = self.image(&assignment.case_id)?;
        let (h, w) = image.dims2()?;
        let grid = self.net.config.grid();
        match assignment.method {
            StudyMethod::GradCam | StudyMethod::Tmme => {
                explain(&self.net, &image, 0, assignment.method.map_method())
            }
            StudyMethod::Artificial => {
                let mask = match &record.mask {
                    Some(path) => read_pgm(&self.manifest.resolve(path))?,
                    None if !record.boxes.is_empty() => boxes_to_mask(&record.boxes, h, w)?,
                    None => {
                        return Err(Error::arg(format!(
                            "case {:?} has no mask for an artificial map",
                            record.id
                        )))
                    }
                };
                artificial_map(&mask, grid)
            }
            StudyMethod::Random => random_map(
                &mut Rng::stream(seed, index as u64),
                (h, w),
                DEFAULT_OCTAVES,
                grid,
            ),
        }
    }
}
