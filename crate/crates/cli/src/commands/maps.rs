use std::path::PathBuf;

use anyhow::{bail, Result};
use atnb_core::dataio::read_pgm;
use atnb_core::saliency::{artificial_map, explain, random_map, save_map};
use atnb_core::{MapMethod, Rng, SaliencyMap, VisionTransformer};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use super::{check_size, parse_method, Case, InputArgs, ModelArgs};
use crate::output::{RunContext, UsageError};

#[derive(Clone, Debug, Args, Serialize)]
pub struct GenSaliencyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// rollout-mean, rollout-min, tmme-mean, tmme-min, gradcam, artificial or random.
    #[arg(long, default_value = "tmme-mean")]
    pub method: String,
    /// Class to explain; defaults to the configured class.
    #[arg(long)]
    pub class: Option<usize>,
    /// Ground-truth mask (PGM) for artificial maps of a single --image.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct MapEntry {
    pub case: String,
    pub method: String,
    pub class: Option<usize>,
    /// Model confidence for `class`, for model-based maps.
    pub confidence: Option<f32>,
    /// File stem relative to the output directory.
    pub stem: String,
}

#[derive(Debug, Serialize)]
struct GenSaliencyResult {
    maps: Vec<MapEntry>,
    skipped: Vec<String>,
}

/// Map of `method` for `case`; random maps draw from `Rng::stream(seed, index)`.
pub fn map_for(
    net: &VisionTransformer,
    case: &Case,
    index: usize,
    method: MapMethod,
    class: usize,
    seed: u64,
    octaves: usize,
) -> Result<Option<SaliencyMap>> {
    let grid = net.config.grid();
    Ok(Some(match method {
        MapMethod::Artificial => match &case.mask {
            Some(mask) => artificial_map(mask, grid)?,
            None => return Ok(None),
        },
        MapMethod::Random => random_map(
            &mut Rng::stream(seed, index as u64),
            case.image.dims2()?,
            octaves,
            grid,
        )?,
        MapMethod::External => bail!(UsageError::new("external maps are loaded, not generated")),
        model => explain(net, &case.image, class, model)?,
    }))
}

pub fn run(ctx: &RunContext, args: &GenSaliencyArgs) -> Result<()> {
    let method = parse_method(&args.method)?;
    let class = args.class.unwrap_or(ctx.config.class);
    let net = args.model.load(ctx)?;
    if class >= net.config.num_classes {
        bail!(UsageError::new(format!(
            "--class {class} out of range for {} classes",
            net.config.num_classes
        )));
    }
    let mut cases = args.input.cases()?;
    if let Some(mask) = &args.mask {
        if args.input.image.is_none() {
            bail!(UsageError::new("--mask applies to a single --image"));
        }
        cases[0].mask = Some(read_pgm(mask)?);
    }
    for c in &cases {
        check_size(&net, c)?;
    }
    let produced: Vec<(usize, Option<SaliencyMap>)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            Ok((
                i,
                map_for(
                    &net,
                    c,
                    i,
                    method,
                    class,
                    ctx.seed,
                    ctx.config.random_octaves,
                )?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut result = GenSaliencyResult {
        maps: Vec::new(),
        skipped: Vec::new(),
    };
    for (i, map) in produced {
        let case = &cases[i];
        let Some(map) = map else {
            log::warn!("case {} has no mask; skipping artificial map", case.id);
            result.skipped.push(case.id.clone());
            continue;
        };
        let stem = format!("maps/{}.{method}", case.id);
        std::fs::create_dir_all(ctx.path("maps"))?;
        save_map(&ctx.path(&stem), &map, Some(ctx.seed), Some(&case.id))?;
        result.maps.push(MapEntry {
            case: case.id.clone(),
            method: method.to_string(),
            class: map.class,
            confidence: if method.is_model_based() {
                Some(net.confidence(&case.image, class)?)
            } else {
                None
            },
            stem,
        });
    }
    ctx.write_result("gen-saliency.json", &result)?;
    Ok(())
}
