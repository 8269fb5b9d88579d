mod demo;
mod maps;
mod metrics;
mod plots;
mod serve;
mod stats;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use atnb_core::dataio::{boxes_to_mask, load_manifest, read_pgm, CaseRecord, Manifest};
use atnb_core::vit::bundle;
use atnb_core::{MapMethod, Rng, Tensor, VisionTransformer};
use clap::{Args, Subcommand};
use serde::Serialize;

pub use demo::{run_demo, DemoArgs};
pub use maps::GenSaliencyArgs;
pub use metrics::{AgreementArgs, EhrArgs, PerturbArgs, SensitivityArgs};
pub use plots::{export_plots, ExportArgs};
pub use serve::ServeArgs;
pub use stats::{load_scores, CalibrateArgs, DelongArgs, RocArgs};

use crate::output::{RunContext, UsageError};
use crate::{Cli, RunConfig};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute saliency maps for an image or every case of a manifest.
    GenSaliency(GenSaliencyArgs),
    /// Positive/negative perturbation curves.
    Perturb(PerturbArgs),
    /// Sensitivity-n correlation curve.
    SensitivityN(SensitivityArgs),
    /// Effective heat ratio of a map against a ground-truth mask.
    Ehr(EhrArgs),
    /// SSIM agreement between two sets of maps.
    Agreement(AgreementArgs),
    /// ROC curve, AUC with bootstrap CI, and the max-F1 operating point.
    Roc(RocArgs),
    /// Paired DeLong comparison of two scorers.
    Delong(DelongArgs),
    /// Fit a histogram-binning calibrator and optionally apply it to a manifest.
    Calibrate(CalibrateArgs),
    /// Extract every curve in result JSON files as CSV.
    ExportPlots(ExportArgs),
    /// Serve the reader study over HTTP.
    ServeStudy(ServeArgs),
    /// Build a toy model and synthetic data and run the whole pipeline.
    Demo(DemoArgs),
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::GenSaliency(a) => maps::run(&context(cli, &config, "gen-saliency", a)?, a),
        Command::Perturb(a) => metrics::perturb(&context(cli, &config, "perturb", a)?, a),
        Command::SensitivityN(a) => {
            metrics::sensitivity(&context(cli, &config, "sensitivity-n", a)?, a)
        }
        Command::Ehr(a) => metrics::ehr(&context(cli, &config, "ehr", a)?, a),
        Command::Agreement(a) => metrics::agreement(&context(cli, &config, "agreement", a)?, a),
        Command::Roc(a) => stats::roc(&context(cli, &config, "roc", a)?, a),
        Command::Delong(a) => stats::delong(&context(cli, &config, "delong", a)?, a),
        Command::Calibrate(a) => stats::calibrate(&context(cli, &config, "calibrate", a)?, a),
        Command::ExportPlots(a) => plots::run(&context(cli, &config, "export-plots", a)?, a),
        Command::ServeStudy(a) => serve::run(&context(cli, &config, "serve-study", a)?, a),
        Command::Demo(a) => demo::run(&context(cli, &config, "demo", a)?, a),
    }
}

fn context<A: Serialize>(
    cli: &Cli,
    config: &RunConfig,
    name: &'static str,
    args: &A,
) -> Result<RunContext> {
    RunContext::new(name, args, cli.seed, config.clone(), cli.out_dir.clone())
}

/// Network source shared by model-based subcommands.
#[derive(Clone, Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Weight bundle directory; without it a network is initialised from --seed.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

impl ModelArgs {
    pub fn load(&self, ctx: &RunContext) -> Result<VisionTransformer> {
        match &self.weights {
            Some(dir) => {
                bundle::load(dir).with_context(|| format!("loading weights from {}", dir.display()))
            }
            None => {
                log::warn!(
                    "no --weights given; using an untrained network initialised from seed {}",
                    ctx.seed
                );
                Ok(VisionTransformer::init(
                    ctx.config.model,
                    &mut Rng::new(ctx.seed),
                )?)
            }
        }
    }
}

/// A single image or every case of a manifest.
#[derive(Clone, Debug, Args, Serialize)]
pub struct InputArgs {
    /// Grayscale PGM image.
    #[arg(
        long,
        conflicts_with = "manifest",
        required_unless_present = "manifest"
    )]
    pub image: Option<PathBuf>,
    /// JSONL case manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// One image to process.
#[derive(Clone, Debug)]
pub struct Case {
    pub id: String,
    pub image: Tensor,
    pub mask: Option<Tensor>,
}

impl InputArgs {
    pub fn cases(&self) -> Result<Vec<Case>> {
        match (&self.image, &self.manifest) {
            (Some(path), _) => Ok(vec![Case {
                id: stem(path),
                image: read_pgm(path)?,
                mask: None,
            }]),
            (None, Some(path)) => manifest_cases(&load_manifest(path)?),
            (None, None) => bail!(UsageError::new("one of --image or --manifest is required")),
        }
    }
}

pub fn manifest_cases(m: &Manifest) -> Result<Vec<Case>> {
    m.cases.iter().map(|c| manifest_case(m, c)).collect()
}

fn manifest_case(m: &Manifest, c: &CaseRecord) -> Result<Case> {
    let image = read_pgm(&m.resolve(&c.image))?;
    let (h, w) = image.dims2()?;
    let mask = match &c.mask {
        Some(p) => Some(read_pgm(&m.resolve(p))?),
        None if !c.boxes.is_empty() => Some(boxes_to_mask(&c.boxes, h, w)?),
        None => None,
    };
    Ok(Case {
        id: c.id.clone(),
        image,
        mask,
    })
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

pub fn parse_method(s: &str) -> Result<MapMethod> {
    s.parse::<MapMethod>()
        .map_err(|e| UsageError::new(format!("--method: {e}")).into())
}

/// Check that `image` matches the network input size.
pub fn check_size(net: &VisionTransformer, case: &Case) -> Result<()> {
    let (h, w) = case.image.dims2()?;
    let s = net.config.image_size;
    if (h, w) != (s, s) {
        bail!("case {} is {h}x{w}, the network expects {s}x{s}", case.id);
    }
    Ok(())
}

/// Perturbation reference: `zeros`, `ones`, a PGM path, or `auto` (the
/// lowest-confidence image among zeros, ones and the other cases).
pub fn reference_for(
    net: &VisionTransformer,
    spec: &str,
    cases: &[Case],
    index: usize,
    class: usize,
) -> Result<Tensor> {
    let shape = cases[index].image.shape().to_vec();
    match spec {
        "zeros" => Ok(Tensor::zeros(&shape)),
        "ones" => Ok(Tensor::full(&shape, 1.0)),
        "auto" => {
            let mut pool = vec![Tensor::zeros(&shape), Tensor::full(&shape, 1.0)];
            pool.extend(
                cases
                    .iter()
                    .enumerate()
                    .filter(|&(i, c)| i != index && c.image.shape() == shape.as_slice())
                    .map(|(_, c)| c.image.clone()),
            );
            let best = net.select_reference(&pool, class)?;
            Ok(pool.swap_remove(best))
        }
        path => Ok(read_pgm(Path::new(path))?),
    }
}
