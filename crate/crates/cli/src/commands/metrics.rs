use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use atnb_core::dataio::read_pgm;
use atnb_core::metrics::{
    effective_heat_ratio, map_agreement, perturbation_test, MetricReport, PerturbDirection,
    Ranking, SensitivitySamples,
};
use atnb_core::saliency::load_map;
use atnb_core::{MapMethod, Rng, SaliencyMap, Tensor, VisionTransformer};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use super::maps::map_for;
use super::{check_size, parse_method, reference_for, Case, InputArgs, ModelArgs};
use crate::output::{RunContext, UsageError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Directions {
    Both,
    Positive,
    Negative,
}

impl Directions {
    fn list(self) -> Vec<PerturbDirection> {
        match self {
            Directions::Both => vec![PerturbDirection::Positive, PerturbDirection::Negative],
            Directions::Positive => vec![PerturbDirection::Positive],
            Directions::Negative => vec![PerturbDirection::Negative],
        }
    }
}

/// Which map ranks the patches.
#[derive(Clone, Debug, Args, Serialize)]
pub struct RankingArgs {
    /// Map method computed on the fly.
    #[arg(long, default_value = "tmme-mean", conflicts_with = "map")]
    pub method: String,
    /// Precomputed map (.atnb stem or file) used as a fixed ranking; single --image only.
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub ranking: RankingArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub direction: Directions,
    /// zeros, ones, auto, or a PGM path.
    #[arg(long, default_value = "auto")]
    pub reference: String,
    #[arg(long)]
    pub class: Option<usize>,
    /// Keep the initial ranking instead of regenerating the map after each step.
    #[arg(long)]
    pub no_recompute: bool,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub ranking: RankingArgs,
    /// Random masks per n; defaults to the configured value.
    #[arg(long)]
    pub masks: Option<usize>,
    /// Number of log-spaced n values; defaults to the configured value.
    #[arg(long)]
    pub n_count: Option<usize>,
    #[arg(long, default_value = "auto")]
    pub reference: String,
    #[arg(long)]
    pub class: Option<usize>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct EhrArgs {
    /// Saliency map (.atnb stem or file).
    #[arg(long)]
    pub map: PathBuf,
    /// Ground-truth mask (PGM, nonzero = lesion).
    #[arg(long)]
    pub mask: PathBuf,
    /// Threshold count; defaults to the configured value.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct AgreementArgs {
    /// Maps (files or directories of .atnb maps) of the first run.
    #[arg(long, num_args = 1.., required = true)]
    pub a: Vec<PathBuf>,
    /// Maps of the second run, paired with --a in sorted order.
    #[arg(long, num_args = 1.., required = true)]
    pub b: Vec<PathBuf>,
    /// Bootstrap resamples; defaults to the configured value.
    #[arg(long)]
    pub resamples: Option<usize>,
}

/// Per-case results of one metric.
#[derive(Debug, Serialize)]
pub struct CaseReports {
    pub case: String,
    pub reports: Vec<MetricReport>,
}

#[derive(Debug, Serialize)]
pub struct MeanAuc {
    pub label: String,
    pub mean_auc: f64,
    pub cases: usize,
}

#[derive(Debug, Serialize)]
struct MetricResult {
    cases: Vec<CaseReports>,
    summary: Vec<MeanAuc>,
}

fn class_of(ctx: &RunContext, net: &VisionTransformer, class: Option<usize>) -> Result<usize> {
    let class = class.unwrap_or(ctx.config.class);
    if class >= net.config.num_classes {
        bail!(UsageError::new(format!(
            "--class {class} out of range for {} classes",
            net.config.num_classes
        )));
    }
    Ok(class)
}

/// Resolved ranking for every case.
enum Source {
    Method(MapMethod),
    Fixed(Tensor, String),
}

fn ranking_source(
    args: &RankingArgs,
    input: &InputArgs,
    net: &VisionTransformer,
) -> Result<Source> {
    match &args.map {
        Some(path) => {
            if input.image.is_none() {
                bail!(UsageError::new("--map applies to a single --image"));
            }
            let (map, _) = load_map(path, net.config.grid())?;
            Ok(Source::Fixed(map.grid, map.method.to_string()))
        }
        None => Ok(Source::Method(parse_method(&args.method)?)),
    }
}

fn mean_by_label(cases: &[CaseReports]) -> Vec<MeanAuc> {
    let mut labels: Vec<String> = Vec::new();
    for r in cases.iter().flat_map(|c| &c.reports) {
        let label = report_label(r);
        if !labels.contains(&label) {
            labels.push(label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let aucs: Vec<f64> = cases
                .iter()
                .flat_map(|c| &c.reports)
                .filter(|r| report_label(r) == label)
                .map(|r| r.auc)
                .collect();
            MeanAuc {
                mean_auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
                cases: aucs.len(),
                label,
            }
        })
        .collect()
}

fn report_label(r: &MetricReport) -> String {
    match &r.method {
        Some(m) => format!("{}/{m}", r.metric),
        None => r.metric.clone(),
    }
}

fn write_curves(ctx: &RunContext, dir: &str, cases: &[CaseReports]) -> Result<()> {
    for c in cases {
        for r in &c.reports {
            let mut csv = String::from("x,y\n");
            for (x, y) in r.xs.iter().zip(&r.ys) {
                csv.push_str(&format!("{x},{y}\n"));
            }
            let method = r.method.as_deref().unwrap_or("map");
            ctx.write_text(&format!("{dir}/{}.{method}.{}.csv", c.case, r.metric), &csv)?;
        }
    }
    Ok(())
}

/// Perturbation reports for one case.
#[allow(clippy::too_many_arguments)]
pub fn perturb_case(
    net: &VisionTransformer,
    cases: &[Case],
    index: usize,
    method: MapMethod,
    class: usize,
    reference: &Tensor,
    directions: &[PerturbDirection],
    recompute: bool,
    ctx: &RunContext,
) -> Result<Option<CaseReports>> {
    let case = &cases[index];
    let fixed = if method.is_model_based() {
        None
    } else {
        match map_for(
            net,
            case,
            index,
            method,
            class,
            ctx.seed,
            ctx.config.random_octaves,
        )? {
            Some(m) => Some(m.grid),
            None => return Ok(None),
        }
    };
    let mut reports = Vec::new();
    for &d in directions {
        let ranking = match &fixed {
            Some(grid) => Ranking::Fixed(grid),
            None => Ranking::Model(method),
        };
        let p = perturbation_test(net, &case.image, class, ranking, d, reference, recompute)?;
        reports.push(perturb_report(d, method.to_string(), class, p.curve, ctx));
    }
    Ok(Some(CaseReports {
        case: case.id.clone(),
        reports,
    }))
}

fn perturb_report(
    d: PerturbDirection,
    method: String,
    class: usize,
    curve: atnb_core::metrics::MetricCurve,
    ctx: &RunContext,
) -> MetricReport {
    let metric = match d {
        PerturbDirection::Positive => "perturbation-positive",
        PerturbDirection::Negative => "perturbation-negative",
    };
    MetricReport::new(
        metric,
        Some(method),
        Some(class),
        curve,
        Some(ctx.seed),
        &ctx.config_hash,
    )
}

pub fn perturb(ctx: &RunContext, args: &PerturbArgs) -> Result<()> {
    let net = args.model.load(ctx)?;
    let class = class_of(ctx, &net, args.class)?;
    let cases = args.input.cases()?;
    cases.iter().try_for_each(|c| check_size(&net, c))?;
    let source = ranking_source(&args.ranking, &args.input, &net)?;
    let recompute = ctx.config.recompute && !args.no_recompute;
    let directions = args.direction.list();
    let results: Vec<Option<CaseReports>> = (0..cases.len())
        .into_par_iter()
        .map(|i| -> Result<Option<CaseReports>> {
            let reference = reference_for(&net, &args.reference, &cases, i, class)?;
            match &source {
                Source::Method(m) => perturb_case(
                    &net,
                    &cases,
                    i,
                    *m,
                    class,
                    &reference,
                    &directions,
                    recompute,
                    ctx,
                ),
                Source::Fixed(grid, label) => {
                    let mut reports = Vec::new();
                    for &d in &directions {
                        let p = perturbation_test(
                            &net,
                            &cases[i].image,
                            class,
                            Ranking::Fixed(grid),
                            d,
                            &reference,
                            false,
                        )?;
                        reports.push(perturb_report(d, label.clone(), class, p.curve, ctx));
                    }
                    Ok(Some(CaseReports {
                        case: cases[i].id.clone(),
                        reports,
                    }))
                }
            }
        })
        .collect::<Result<_>>()?;
    let cases: Vec<CaseReports> = results.into_iter().flatten().collect();
    write_curves(ctx, "curves", &cases)?;
    let summary = mean_by_label(&cases);
    ctx.write_result("perturb.json", &MetricResult { cases, summary })?;
    Ok(())
}

pub fn sensitivity(ctx: &RunContext, args: &SensitivityArgs) -> Result<()> {
    let net = args.model.load(ctx)?;
    let class = class_of(ctx, &net, args.class)?;
    let cases = args.input.cases()?;
    cases.iter().try_for_each(|c| check_size(&net, c))?;
    let source = ranking_source(&args.ranking, &args.input, &net)?;
    let masks = args.masks.unwrap_or(ctx.config.sensitivity_masks);
    let n_count = args.n_count.unwrap_or(ctx.config.sensitivity_n_count);
    let mut out = Vec::new();
    for i in 0..cases.len() {
        let reference = reference_for(&net, &args.reference, &cases, i, class)?;
        let samples = SensitivitySamples::draw(
            &net,
            &cases[i].image,
            class,
            &reference,
            masks,
            n_count,
            &mut Rng::stream(ctx.seed, i as u64),
        )?;
        let (grid, label) = match &source {
            Source::Fixed(grid, label) => (grid.clone(), label.clone()),
            Source::Method(m) => match map_for(
                &net,
                &cases[i],
                i,
                *m,
                class,
                ctx.seed,
                ctx.config.random_octaves,
            )? {
                Some(map) => (map.grid, m.to_string()),
                None => continue,
            },
        };
        let curve = samples.curve(&grid)?;
        out.push(CaseReports {
            case: cases[i].id.clone(),
            reports: vec![MetricReport::new(
                "sensitivity-n",
                Some(label),
                Some(class),
                curve,
                Some(ctx.seed),
                &ctx.config_hash,
            )],
        });
    }
    write_curves(ctx, "curves", &out)?;
    let summary = mean_by_label(&out);
    ctx.write_result(
        "sensitivity-n.json",
        &MetricResult {
            cases: out,
            summary,
        },
    )?;
    Ok(())
}

pub fn ehr(ctx: &RunContext, args: &EhrArgs) -> Result<()> {
    let (map, _) = load_map(&args.map, ctx.config.model.grid())?;
    let mask = read_pgm(&args.mask)?;
    let steps = args.steps.unwrap_or(ctx.config.ehr_steps);
    let curve = effective_heat_ratio(&map.image, &mask, steps)?;
    let csv = curve.to_csv();
    let report = MetricReport::new(
        "ehr",
        Some(map.method.to_string()),
        map.class,
        curve,
        Some(ctx.seed),
        &ctx.config_hash,
    );
    ctx.write_text("ehr.csv", &csv)?;
    ctx.write_result("ehr.json", &report)?;
    Ok(())
}

/// `.atnb` map files named by `paths`, expanding directories in sorted order.
pub fn collect_maps(paths: &[PathBuf], grid: usize) -> Result<Vec<SaliencyMap>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| is_map_file(f));
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| {
            Ok(load_map(f, grid)
                .with_context(|| format!("loading map {}", f.display()))?
                .0)
        })
        .collect()
}

fn is_map_file(path: &Path) -> bool {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.ends_with(".atnb") && !name.ends_with(".grid.atnb")
}

pub fn agreement(ctx: &RunContext, args: &AgreementArgs) -> Result<()> {
    let grid = ctx.config.model.grid();
    let a = collect_maps(&args.a, grid)?;
    let b = collect_maps(&args.b, grid)?;
    if a.len() != b.len() {
        bail!(UsageError::new(format!(
            "--a has {} maps but --b has {}",
            a.len(),
            b.len()
        )));
    }
    let result = map_agreement(
        &a,
        &b,
        args.resamples.unwrap_or(ctx.config.resamples),
        ctx.seed,
    )?;
    ctx.write_result("agreement.json", &result)?;
    Ok(())
}
