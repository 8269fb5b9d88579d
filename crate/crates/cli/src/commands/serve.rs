use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context as _, Result};
use atnb_core::dataio::load_manifest;
use atnb_core::study::{
    candidates_from_manifest, study_threshold, ManifestContent, StudyPlan, StudyService, StudyStore,
};
use clap::Args;
use serde::Serialize;

use super::ModelArgs;
use crate::output::RunContext;
use crate::server::{router, StudyState};

#[derive(Clone, Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Manifest with calibrated scores (see `calibrate --apply`).
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Event log; defaults to `<out-dir>/study-events.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// JSON study plan; defaults to the standard 160-case allocation.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

pub fn run(ctx: &RunContext, args: &ServeArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let threshold = study_threshold(&manifest)?;
    let candidates = candidates_from_manifest(&manifest)?;
    let plan = match &args.plan {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing plan {}", p.display()))?
        }
        None => StudyPlan::standard(),
    };
    let net = args.model.load(ctx)?;
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| ctx.path("study-events.jsonl"));
    let store = StudyStore::open(&log_path, StudyStore::system_clock())?;
    let service = StudyService::new(store, Arc::new(ManifestContent::new(manifest, net)));
    let state = Arc::new(StudyState::new(
        service, candidates, threshold, plan, ctx.seed,
    ));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        eprintln!(
            "study server listening on http://{}",
            listener.local_addr()?
        );
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
