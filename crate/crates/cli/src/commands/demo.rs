use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use anyhow::{Context as _, Result};
use atnb_core::dataio::{save_manifest, Split};
use atnb_core::metrics::{
    effective_heat_ratio, map_agreement, MetricReport, PerturbDirection, SensitivitySamples,
};
use atnb_core::saliency::{explain, save_map};
use atnb_core::stats::{delong_test, Calibrator, LabeledScores};
use atnb_core::study::{
    candidates_from_manifest, study_threshold, CasePayload, Clock, ManifestContent, Outcome,
    Stratum, StudyMethod, StudyPlan, StudyService, StudyStore,
};
use atnb_core::synthetic::write_synthetic_manifest;
use atnb_core::vit::bundle;
use atnb_core::{HeadMerge, MapMethod, Rng, VisionTransformer};
use chrono::{TimeZone, Utc};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use super::maps::map_for;
use super::metrics::{perturb_case, CaseReports};
use super::plots::export_plots;
use super::stats::{apply_calibration, manifest_scores, roc_result, ScoreField};
use super::{manifest_cases, reference_for, Case};
use crate::output::RunContext;
use crate::RunConfig;

#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct DemoArgs {}

/// Methods compared in the demo, in report order.
const METHODS: [MapMethod; 5] = [
    MapMethod::Tmme(HeadMerge::Mean),
    MapMethod::Rollout(HeadMerge::Mean),
    MapMethod::GradCam,
    MapMethod::Random,
    MapMethod::Artificial,
];

/// Seed offsets separating the demo's independent random streams.
const VALIDATION_SEED_OFFSET: u64 = 1;
const SECOND_MODEL_SEED_OFFSET: u64 = 2;

/// Study timestamps start here and tick one second per event.
const DEMO_EPOCH: i64 = 1_704_067_200;

/// Mean metric values of one method (one row of the summary table).
#[derive(Debug, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub perturbation_positive: Option<f64>,
    pub perturbation_negative: Option<f64>,
    pub sensitivity_n: Option<f64>,
    pub ehr: Option<f64>,
    pub cases: usize,
}

#[derive(Debug, Serialize)]
pub struct DemoSummary {
    pub cases: usize,
    pub methods: Vec<MethodSummary>,
    pub test_auc: Option<f64>,
    pub threshold: f64,
    pub study_session: String,
    pub study_reads: usize,
    pub files: Vec<String>,
}

/// Run the demo into `out_dir`.
pub fn run_demo(out_dir: &Path, seed: u64, config: RunConfig) -> Result<DemoSummary> {
    let ctx = RunContext::new(
        "demo",
        &DemoArgs::default(),
        seed,
        config,
        out_dir.to_path_buf(),
    )?;
    execute(&ctx)
}

pub fn run(ctx: &RunContext, _args: &DemoArgs) -> Result<()> {
    let summary = execute(ctx)?;
    eprintln!(
        "demo: {} cases, {} methods, results in {}",
        summary.cases,
        summary.methods.len(),
        ctx.out_dir.display()
    );
    Ok(())
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn ticking_clock() -> Clock {
    let t = Arc::new(AtomicI64::new(DEMO_EPOCH));
    Arc::new(move || {
        Utc.timestamp_opt(t.fetch_add(1, Ordering::SeqCst), 0)
            .single()
            .expect("valid timestamp")
    })
}

/// Serialise a fallible step: the value, or `{"error": ...}`.
fn attempt<T: Serialize>(r: Result<T>) -> Result<serde_json::Value> {
    Ok(match r {
        Ok(v) => serde_json::to_value(v)?,
        Err(e) => serde_json::json!({ "error": format!("{e:#}") }),
    })
}

fn execute(ctx: &RunContext) -> Result<DemoSummary> {
    let cfg = &ctx.config;
    let seed = ctx.seed;
    let class = cfg.class;
    let mut files = Vec::new();

    let net = VisionTransformer::init(cfg.model, &mut Rng::new(seed))?;
    bundle::save(&ctx.path("model"), &net)?;
    let second = VisionTransformer::init(
        cfg.model,
        &mut Rng::new(seed.wrapping_add(SECOND_MODEL_SEED_OFFSET)),
    )?;

    let size = cfg.model.image_size;
    let val = write_synthetic_manifest(
        &ctx.path("data/val"),
        cfg.demo_cases,
        size,
        seed.wrapping_add(VALIDATION_SEED_OFFSET),
        Split::Val,
    )?;
    let mut test = write_synthetic_manifest(
        &ctx.path("data/test"),
        cfg.demo_cases,
        size,
        seed,
        Split::Test,
    )?;

    let validation = manifest_scores(&val, ScoreField::Confidence, class, Some(&net))?;
    let calibrator = Calibrator::fit(&validation, cfg.calibration_bins)?;
    let clamped = apply_calibration(&mut test, &calibrator, class, Some(&net))?;
    save_manifest(&test, &ctx.path("data/test/manifest.jsonl"))?;
    files.push(ctx.write_result(
        "calibrate.json",
        &serde_json::json!({ "calibrator": calibrator, "validation_cases": validation.len(), "clamped": clamped }),
    )?);

    let cases = manifest_cases(&test)?;
    fs::create_dir_all(ctx.path("maps"))?;
    for (i, case) in cases.iter().enumerate() {
        for method in METHODS {
            if let Some(map) = map_for(&net, case, i, method, class, seed, cfg.random_octaves)? {
                save_map(
                    &ctx.path(format!("maps/{}.{method}", case.id)),
                    &map,
                    Some(seed),
                    Some(&case.id),
                )?;
            }
        }
    }

    let perturbation = perturbation_runs(ctx, &net, &cases)?;
    files.push(ctx.write_result(
        "perturb.json",
        &serde_json::json!({ "cases": perturbation }),
    )?);
    let sensitivity = sensitivity_runs(ctx, &net, &cases)?;
    files.push(ctx.write_result(
        "sensitivity-n.json",
        &serde_json::json!({ "cases": sensitivity }),
    )?);
    let ehr = ehr_runs(ctx, &net, &cases)?;
    files.push(ctx.write_result("ehr.json", &serde_json::json!({ "cases": ehr }))?);

    let agreement = agreement_runs(ctx, &net, &second, &cases)?;
    files.push(ctx.write_result("agreement.json", &agreement)?);

    let calibrated = manifest_scores(&test, ScoreField::Calibrated, class, None)?;
    let roc = roc_result(&calibrated, cfg.resamples, seed);
    let test_auc = roc.as_ref().ok().map(|r| r.auc.estimate);
    files.push(ctx.write_result("roc.json", &attempt(roc)?)?);
    let second_scores =
        manifest_scores(&test, ScoreField::Confidence, class, None).and_then(|first| {
            let b = cases
                .iter()
                .map(|c| Ok(second.confidence(&c.image, class)? as f64))
                .collect::<Result<Vec<f64>>>()?;
            Ok((first.clone(), LabeledScores::new(b, first.labels)?))
        });
    let delong = second_scores.and_then(|(a, b)| Ok(delong_test(&a, &b)?));
    files.push(ctx.write_result("delong.json", &attempt(delong)?)?);

    let (threshold, session, reads) = study_run(ctx, &test, net.clone())?;
    files.push(ctx.path("study-report.json"));

    let methods = summarize(&perturbation, &sensitivity, &ehr);
    let summary = DemoSummary {
        cases: cases.len(),
        methods,
        test_auc,
        threshold,
        study_session: session,
        study_reads: reads,
        files: files
            .iter()
            .map(|p| {
                p.strip_prefix(&ctx.out_dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
    };
    ctx.write_result("demo.json", &summary)?;
    export_plots(&ctx.out_dir, &ctx.path("plots"))?;
    Ok(summary)
}

fn perturbation_runs(
    ctx: &RunContext,
    net: &VisionTransformer,
    cases: &[Case],
) -> Result<Vec<CaseReports>> {
    let class = ctx.config.class;
    let directions = [PerturbDirection::Positive, PerturbDirection::Negative];
    let per_case: Vec<Vec<CaseReports>> = (0..cases.len())
        .into_par_iter()
        .map(|i| -> Result<Vec<CaseReports>> {
            let reference = reference_for(net, "auto", cases, i, class)?;
            let mut out = Vec::new();
            for method in METHODS {
                if let Some(r) = perturb_case(
                    net,
                    cases,
                    i,
                    method,
                    class,
                    &reference,
                    &directions,
                    ctx.config.recompute,
                    ctx,
                )? {
                    out.push(r);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_case.into_iter().flatten().collect())
}

fn sensitivity_runs(
    ctx: &RunContext,
    net: &VisionTransformer,
    cases: &[Case],
) -> Result<Vec<CaseReports>> {
    let cfg = &ctx.config;
    let per_case: Vec<CaseReports> = (0..cases.len())
        .into_par_iter()
        .map(|i| -> Result<CaseReports> {
            let reference = reference_for(net, "auto", cases, i, cfg.class)?;
            let samples = SensitivitySamples::draw(
                net,
                &cases[i].image,
                cfg.class,
                &reference,
                cfg.demo_sensitivity_masks,
                cfg.sensitivity_n_count,
                &mut Rng::stream(ctx.seed, i as u64),
            )?;
            let mut reports = Vec::new();
            for method in METHODS {
                if let Some(map) = map_for(
                    net,
                    &cases[i],
                    i,
                    method,
                    cfg.class,
                    ctx.seed,
                    cfg.random_octaves,
                )? {
                    reports.push(MetricReport::new(
                        "sensitivity-n",
                        Some(method.to_string()),
                        Some(cfg.class),
                        samples.curve(&map.grid)?,
                        Some(ctx.seed),
                        &ctx.config_hash,
                    ));
                }
            }
            Ok(CaseReports {
                case: cases[i].id.clone(),
                reports,
            })
        })
        .collect::<Result<_>>()?;
    Ok(per_case)
}

fn ehr_runs(ctx: &RunContext, net: &VisionTransformer, cases: &[Case]) -> Result<Vec<CaseReports>> {
    let cfg = &ctx.config;
    let mut out = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let Some(mask) = &case.mask else { continue };
        let mut reports = Vec::new();
        for method in METHODS {
            if let Some(map) = map_for(
                net,
                case,
                i,
                method,
                cfg.class,
                ctx.seed,
                cfg.random_octaves,
            )? {
                reports.push(MetricReport::new(
                    "ehr",
                    Some(method.to_string()),
                    map.class,
                    effective_heat_ratio(&map.image, mask, cfg.ehr_steps)?,
                    Some(ctx.seed),
                    &ctx.config_hash,
                ));
            }
        }
        out.push(CaseReports {
            case: case.id.clone(),
            reports,
        });
    }
    Ok(out)
}

fn agreement_runs(
    ctx: &RunContext,
    net: &VisionTransformer,
    second: &VisionTransformer,
    cases: &[Case],
) -> Result<serde_json::Value> {
    let class = ctx.config.class;
    let maps = |n: &VisionTransformer, m: MapMethod| {
        cases
            .iter()
            .map(|c| explain(n, &c.image, class, m))
            .collect::<atnb_core::Result<Vec<_>>>()
    };
    let tmme = MapMethod::Tmme(HeadMerge::Mean);
    let a = maps(net, tmme)?;
    let b = maps(second, tmme)?;
    let g = maps(net, MapMethod::GradCam)?;
    Ok(serde_json::json!({
        "tmme_repeatability": map_agreement(&a, &b, ctx.config.resamples, ctx.seed)?,
        "tmme_vs_gradcam": map_agreement(&a, &g, ctx.config.resamples, ctx.seed)?,
    }))
}

/// Spread each outcome's cases round-robin over the methods allowed for it.
fn demo_plan(candidates: &[atnb_core::study::Candidate], threshold: f64) -> StudyPlan {
    let mut strata = Vec::new();
    for outcome in Outcome::ALL {
        let pool: Vec<_> = candidates
            .iter()
            .filter(|c| Outcome::of(c.label, c.calibrated >= threshold) == outcome)
            .collect();
        let masked = pool.iter().filter(|c| c.has_mask).count();
        let methods: &[StudyMethod] = if outcome.label() {
            &[
                StudyMethod::GradCam,
                StudyMethod::Tmme,
                StudyMethod::Artificial,
                StudyMethod::Random,
            ]
        } else {
            &[StudyMethod::GradCam, StudyMethod::Tmme]
        };
        let mut counts = vec![0usize; methods.len()];
        for k in 0..pool.len() {
            counts[k % methods.len()] += 1;
        }
        if let Some(j) = methods.iter().position(|&m| m == StudyMethod::Artificial) {
            let excess = counts[j].saturating_sub(masked);
            counts[j] -= excess;
            counts[0] += excess;
        }
        for (&method, &count) in methods.iter().zip(&counts) {
            if count > 0 {
                strata.push(Stratum {
                    method,
                    outcome,
                    count,
                });
            }
        }
    }
    StudyPlan { strata }
}

/// A scripted reader: follows the model in phase 1, reads the label in phase 2.
fn study_run(
    ctx: &RunContext,
    manifest: &atnb_core::dataio::Manifest,
    net: VisionTransformer,
) -> Result<(f64, String, usize)> {
    let threshold = study_threshold(manifest)?;
    let candidates = candidates_from_manifest(manifest)?;
    let plan = demo_plan(&candidates, threshold);
    let log = ctx.path("study/events.jsonl");
    fs::create_dir_all(ctx.path("study"))?;
    if log.exists() {
        fs::remove_file(&log).with_context(|| format!("removing {}", log.display()))?;
    }
    let store = StudyStore::open(&log, ticking_clock())?;
    let mut svc = StudyService::new(store, Arc::new(ManifestContent::new(manifest.clone(), net)));
    let session = format!("demo-{}", ctx.seed);
    svc.create_session(
        &plan,
        &candidates,
        threshold,
        ctx.seed,
        Some(session.clone()),
    )?;
    let mut rng = Rng::stream(ctx.seed, u64::MAX);
    let mut reads = 0;
    while let Ok(CasePayload::Phase1(p1)) = svc.next_case(&session) {
        let label = manifest
            .case(&p1.case_id)
            .map(|c| c.labels[0])
            .unwrap_or(false);
        svc.submit_phase1(&session, &p1.case_id, p1.confidence >= threshold)?;
        svc.submit_phase2(&session, &p1.case_id, label, 1 + rng.below(5) as u8)?;
        reads += 1;
    }
    ctx.write_result("study-report.json", &svc.report(&session)?)?;
    write_plan(ctx, &plan)?;
    Ok((threshold, session, reads))
}

fn write_plan(ctx: &RunContext, plan: &StudyPlan) -> Result<()> {
    crate::output::write_json(&ctx.path("study/plan.json"), plan)
}

fn summarize(
    perturbation: &[CaseReports],
    sensitivity: &[CaseReports],
    ehr: &[CaseReports],
) -> Vec<MethodSummary> {
    let collect = |set: &[CaseReports], metric: &str, method: &str| -> Vec<f64> {
        set.iter()
            .flat_map(|c| &c.reports)
            .filter(|r| r.metric == metric && r.method.as_deref() == Some(method))
            .map(|r| r.auc)
            .collect()
    };
    METHODS
        .iter()
        .map(|m| {
            let name = m.to_string();
            let pos = collect(perturbation, "perturbation-positive", &name);
            MethodSummary {
                perturbation_positive: mean(&pos),
                perturbation_negative: mean(&collect(perturbation, "perturbation-negative", &name)),
                sensitivity_n: mean(&collect(sensitivity, "sensitivity-n", &name)),
                ehr: mean(&collect(ehr, "ehr", &name)),
                cases: pos.len(),
                method: name,
            }
        })
        .collect()
}
