use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use clap::Args;
use serde::Serialize;
use serde_json::Value;

use crate::output::{write_json, RunContext};

#[derive(Clone, Debug, Args, Serialize)]
pub struct ExportArgs {
    /// Directory of result JSON files; defaults to --out-dir.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

/// One exported curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotEntry {
    /// Source result file name.
    pub source: String,
    /// JSON pointer of the curve inside the source.
    pub pointer: String,
    /// CSV file name inside the plots directory.
    pub csv: String,
    pub metric: Option<String>,
    pub method: Option<String>,
    pub auc: Option<f64>,
}

/// Write every curve found in `results_dir/*.json` to `plots_dir` as CSV,
/// plus an `index.json` listing them. Curves are objects with `xs`/`ys`
/// arrays (metric reports) or `points` arrays of ROC points.
pub fn export_plots(results_dir: &Path, plots_dir: &Path) -> Result<Vec<PlotEntry>> {
    let mut files: Vec<PathBuf> = fs::read_dir(results_dir)
        .with_context(|| format!("listing {}", results_dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|f| f.extension().is_some_and(|e| e == "json"));
    files.sort();
    fs::create_dir_all(plots_dir).with_context(|| format!("creating {}", plots_dir.display()))?;
    let mut entries = Vec::new();
    for file in files {
        let text =
            fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let Ok(value) = serde_json::from_str::<Value>(&text) else {
            log::warn!("skipping {}: not JSON", file.display());
            continue;
        };
        let source = file
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let stem = source.trim_end_matches(".json").to_string();
        let mut found = Vec::new();
        find_curves(&value, String::new(), &mut found);
        for (k, (pointer, csv_text, curve)) in found.into_iter().enumerate() {
            let csv = format!("{stem}-{k:03}.csv");
            fs::write(plots_dir.join(&csv), csv_text).with_context(|| format!("writing {csv}"))?;
            entries.push(PlotEntry {
                source: source.clone(),
                pointer,
                csv,
                metric: curve
                    .get("metric")
                    .and_then(Value::as_str)
                    .map(str::to_owned),
                method: curve
                    .get("method")
                    .and_then(Value::as_str)
                    .map(str::to_owned),
                auc: curve.get("auc").and_then(Value::as_f64),
            });
        }
    }
    write_json(&plots_dir.join("index.json"), &entries)?;
    Ok(entries)
}

fn find_curves<'a>(v: &'a Value, pointer: String, out: &mut Vec<(String, String, &'a Value)>) {
    match v {
        Value::Object(map) => {
            if let (Some(Value::Array(xs)), Some(Value::Array(ys))) = (map.get("xs"), map.get("ys"))
            {
                let mut csv = String::from("x,y\n");
                for (x, y) in xs.iter().zip(ys) {
                    csv.push_str(&format!("{x},{y}\n"));
                }
                out.push((pointer, csv, v));
                return;
            }
            if let Some(Value::Array(points)) = map.get("points") {
                if points
                    .iter()
                    .all(|p| p.get("fpr").is_some() && p.get("tpr").is_some())
                    && !points.is_empty()
                {
                    let mut csv = String::from("fpr,tpr,threshold\n");
                    for p in points {
                        csv.push_str(&format!("{},{},{}\n", p["fpr"], p["tpr"], p["threshold"]));
                    }
                    out.push((pointer, csv, v));
                    return;
                }
            }
            for (k, child) in map {
                find_curves(child, format!("{pointer}/{k}"), out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                find_curves(child, format!("{pointer}/{i}"), out);
            }
        }
        _ => {}
    }
}

pub fn run(ctx: &RunContext, args: &ExportArgs) -> Result<()> {
    let results = args.results.clone().unwrap_or_else(|| ctx.out_dir.clone());
    let entries = export_plots(&results, &ctx.path("plots"))?;
    log::info!("exported {} curves", entries.len());
    Ok(())
}
