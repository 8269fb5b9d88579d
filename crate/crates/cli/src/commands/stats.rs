use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use atnb_core::dataio::{load_manifest, read_pgm, save_manifest, Manifest};
use atnb_core::stats::{
    bootstrap_ci, delong_test, max_f1_operating_point, roc_auc, BootstrapCi, Calibrator,
    LabeledScores, OperatingPoint, RocPoint, StatReport,
};
use atnb_core::VisionTransformer;
use clap::{Args, ValueEnum};
use serde::Serialize;

use super::ModelArgs;
use crate::output::{RunContext, UsageError};

/// Which manifest score to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreField {
    Confidence,
    Calibrated,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct RocArgs {
    /// Scores: JSON `{"scores": [...], "labels": [...]}` or a JSONL manifest.
    #[arg(long)]
    pub scores: PathBuf,
    /// Manifest field holding the score.
    #[arg(long, value_enum, default_value = "calibrated")]
    pub field: ScoreField,
    /// Bootstrap resamples; defaults to the configured value.
    #[arg(long)]
    pub resamples: Option<usize>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DelongArgs {
    /// Scores of the first model (same formats as `roc --scores`).
    #[arg(long)]
    pub a: PathBuf,
    /// Scores of the second model on the same cases.
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum, default_value = "calibrated")]
    pub field: ScoreField,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Validation scores used to fit the bins (JSON scores or a manifest).
    #[arg(long)]
    pub validation: PathBuf,
    /// Manifest whose confidences are calibrated and written to `calibrated.jsonl`.
    #[arg(long)]
    pub apply: Option<PathBuf>,
    /// Bin count; defaults to the configured value.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Computes confidences missing from a manifest.
    #[command(flatten)]
    pub model: ModelArgs,
}

fn is_manifest(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

/// Labeled scores from a JSON score file or a manifest's `field` for `class`.
pub fn load_scores(path: &Path, field: ScoreField, class: usize) -> Result<LabeledScores> {
    if is_manifest(path) {
        return manifest_scores(&load_manifest(path)?, field, class, None);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: LabeledScores =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(LabeledScores::new(raw.scores, raw.labels)?)
}

/// Scores of `class` from a manifest; missing confidences are computed with `net` when given.
pub fn manifest_scores(
    m: &Manifest,
    field: ScoreField,
    class: usize,
    net: Option<&VisionTransformer>,
) -> Result<LabeledScores> {
    let mut scores = Vec::with_capacity(m.cases.len());
    let mut labels = Vec::with_capacity(m.cases.len());
    for c in &m.cases {
        let value = match field {
            ScoreField::Confidence => c.confidence,
            ScoreField::Calibrated => c.calibrated,
        };
        let score = match (value, net) {
            (Some(v), _) => v,
            (None, Some(net)) if field == ScoreField::Confidence => {
                net.confidence(&read_pgm(&m.resolve(&c.image))?, class)? as f64
            }
            _ => bail!("case {:?} has no {field:?} score", c.id),
        };
        let label = *c
            .labels
            .get(class)
            .with_context(|| format!("case {:?} has no label for class {class}", c.id))?;
        scores.push(score);
        labels.push(label);
    }
    Ok(LabeledScores::new(scores, labels)?)
}

#[derive(Debug, Serialize)]
pub struct RocResult {
    pub auc: StatReport,
    pub bootstrap: BootstrapCi,
    pub operating_point: OperatingPoint,
    pub points: Vec<RocPoint>,
}

pub fn roc_result(data: &LabeledScores, resamples: usize, seed: u64) -> Result<RocResult> {
    let curve = roc_auc(data)?;
    let ci = bootstrap_ci(
        data.len(),
        |idx| roc_auc(&data.select(idx)).ok().map(|r| r.auc),
        resamples,
        seed,
        true,
    )?;
    Ok(RocResult {
        auc: StatReport {
            metric: "auc".into(),
            estimate: curve.auc,
            ci_lo: ci.lo,
            ci_hi: ci.hi,
            n: data.len(),
            seed,
        },
        bootstrap: ci,
        operating_point: max_f1_operating_point(data)?,
        points: curve.points,
    })
}

pub fn roc(ctx: &RunContext, args: &RocArgs) -> Result<()> {
    let data = load_scores(&args.scores, args.field, ctx.config.class)?;
    let result = roc_result(
        &data,
        args.resamples.unwrap_or(ctx.config.resamples),
        ctx.seed,
    )?;
    let mut csv = String::from("fpr,tpr,threshold\n");
    for p in &result.points {
        csv.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
    }
    ctx.write_text("roc.csv", &csv)?;
    ctx.write_result("roc.json", &result)?;
    Ok(())
}

pub fn delong(ctx: &RunContext, args: &DelongArgs) -> Result<()> {
    let a = load_scores(&args.a, args.field, ctx.config.class)?;
    let b = load_scores(&args.b, args.field, ctx.config.class)?;
    if a.labels != b.labels {
        bail!(UsageError::new(
            "--a and --b must score the same cases with the same labels"
        ));
    }
    ctx.write_result("delong.json", &delong_test(&a, &b)?)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Applied {
    manifest: PathBuf,
    cases: usize,
    clamped: usize,
}

#[derive(Debug, Serialize)]
struct CalibrateResult {
    calibrator: Calibrator,
    applied: Option<Applied>,
}

/// Set every case's `confidence` (computing it with `net` if absent) and
/// `calibrated` score; returns the number of clamped inputs.
pub fn apply_calibration(
    m: &mut Manifest,
    cal: &Calibrator,
    class: usize,
    net: Option<&VisionTransformer>,
) -> Result<usize> {
    let scores = manifest_scores(m, ScoreField::Confidence, class, net)?;
    let mut clamped = 0;
    for (c, &s) in m.cases.iter_mut().zip(&scores.scores) {
        let out = cal.apply(s);
        clamped += usize::from(out.clamped);
        c.confidence = Some(s);
        c.calibrated = Some(out.value);
    }
    Ok(clamped)
}

pub fn calibrate(ctx: &RunContext, args: &CalibrateArgs) -> Result<()> {
    let class = ctx.config.class;
    let needs_model = |p: &Path| -> Result<bool> {
        Ok(is_manifest(p)
            && load_manifest(p)?
                .cases
                .iter()
                .any(|c| c.confidence.is_none()))
    };
    let net = if needs_model(&args.validation)?
        || args
            .apply
            .as_deref()
            .map(needs_model)
            .transpose()?
            .unwrap_or(false)
    {
        Some(args.model.load(ctx)?)
    } else {
        None
    };
    let validation = if is_manifest(&args.validation) {
        manifest_scores(
            &load_manifest(&args.validation)?,
            ScoreField::Confidence,
            class,
            net.as_ref(),
        )?
    } else {
        load_scores(&args.validation, ScoreField::Confidence, class)?
    };
    let calibrator = Calibrator::fit(
        &validation,
        args.bins.unwrap_or(ctx.config.calibration_bins),
    )?;
    let applied = match &args.apply {
        None => None,
        Some(path) => {
            let mut m = load_manifest(path)?;
            let clamped = apply_calibration(&mut m, &calibrator, class, net.as_ref())?;
            let base = m.base_dir.clone();
            for c in &mut m.cases {
                c.image = absolute(&base, &c.image)?;
                if let Some(mask) = &c.mask {
                    c.mask = Some(absolute(&base, mask)?);
                }
            }
            let out = ctx.path("calibrated.jsonl");
            save_manifest(&m, &out)?;
            Some(Applied {
                manifest: out,
                cases: m.cases.len(),
                clamped,
            })
        }
    };
    ctx.write_result(
        "calibrate.json",
        &CalibrateResult {
            calibrator,
            applied,
        },
    )?;
    Ok(())
}

fn absolute(base: &Path, p: &Path) -> Result<PathBuf> {
    let joined = base.join(p);
    joined
        .canonicalize()
        .with_context(|| format!("resolving {}", joined.display()))
}
