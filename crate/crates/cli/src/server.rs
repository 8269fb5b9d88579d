//! HTTP/JSON front of the reader study.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `POST /sessions` | `{seed?, plan?, id?}` | `201 {session, total, threshold}` |
//! | `GET /sessions/{id}/next` | | phase-one or phase-two payload; `410` when complete |
//! | `POST /sessions/{id}/cases/{cid}/phase1` | `{present}` | phase-two payload with overlay |
//! | `POST /sessions/{id}/cases/{cid}/phase2` | `{present, usefulness}` | ack |
//! | `GET /sessions/{id}/report` | | session report |
//!
//! Errors reply `{error, message}` with 404 (unknown session), 409 (conflict
//! or out of order), 410 (session complete), 422 (malformed body, validation
//! or planning) or 500.

use std::sync::{Arc, Mutex, MutexGuard};

use atnb_core::study::{Candidate, StudyError, StudyPlan, StudyService};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Shared server state; one mutex serialises all writers.
pub struct StudyState {
    service: Mutex<StudyService>,
    candidates: Vec<Candidate>,
    threshold: f64,
    plan: StudyPlan,
    default_seed: u64,
}

impl StudyState {
    pub fn new(
        service: StudyService,
        candidates: Vec<Candidate>,
        threshold: f64,
        plan: StudyPlan,
        default_seed: u64,
    ) -> Self {
        Self {
            service: Mutex::new(service),
            candidates,
            threshold,
            plan,
            default_seed,
        }
    }

    fn lock(&self) -> MutexGuard<'_, StudyService> {
        self.service
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

pub fn router(state: Arc<StudyState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_case))
        .route("/sessions/{id}/cases/{cid}/phase1", post(phase1))
        .route("/sessions/{id}/cases/{cid}/phase2", post(phase2))
        .route("/sessions/{id}/report", get(report))
        .with_state(state)
}

struct ApiError(StudyError);

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            StudyError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            StudyError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            StudyError::Order(_) => (StatusCode::CONFLICT, "out_of_order"),
            StudyError::EndOfSession => (StatusCode::GONE, "end_of_session"),
            StudyError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            StudyError::Planning(_) => (StatusCode::UNPROCESSABLE_ENTITY, "planning"),
            StudyError::Core(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        (
            status,
            Json(json!({"error": code, "message": self.0.to_string()})),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Decode a JSON body; an empty body decodes as `default` when one is given.
fn parse_body<T: DeserializeOwned>(bytes: &Bytes, default: Option<T>) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        if let Some(d) = default {
            return Ok(d);
        }
    }
    serde_json::from_slice(bytes)
        .map_err(|e| StudyError::Validation(format!("invalid request body: {e}")).into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    seed: Option<u64>,
    plan: Option<StudyPlan>,
    id: Option<String>,
}

#[derive(Debug, Serialize)]
struct Created {
    session: String,
    total: usize,
    threshold: f64,
}

async fn create_session(
    State(state): State<Arc<StudyState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: CreateSession = parse_body(&body, Some(CreateSession::default()))?;
    let plan = req.plan.unwrap_or_else(|| state.plan.clone());
    let seed = req.seed.unwrap_or(state.default_seed);
    let mut svc = state.lock();
    let session = svc.create_session(&plan, &state.candidates, state.threshold, seed, req.id)?;
    let total = svc.store.session(&session)?.total();
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session,
            total,
            threshold: state.threshold,
        }),
    ))
}

async fn next_case(
    State(state): State<Arc<StudyState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    Ok(Json(state.lock().next_case(&id)?).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Phase1Body {
    present: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Phase2Body {
    present: bool,
    usefulness: i64,
}

async fn phase1(
    State(state): State<Arc<StudyState>>,
    Path((id, cid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let body: Phase1Body = parse_body(&body, None)?;
    Ok(Json(state.lock().submit_phase1(&id, &cid, body.present)?).into_response())
}

async fn phase2(
    State(state): State<Arc<StudyState>>,
    Path((id, cid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let body: Phase2Body = parse_body(&body, None)?;
    let rating = u8::try_from(body.usefulness).map_err(|_| {
        StudyError::Validation(format!("usefulness must be 1..5, got {}", body.usefulness))
    })?;
    Ok(Json(
        state
            .lock()
            .submit_phase2(&id, &cid, body.present, rating)?,
    )
    .into_response())
}

async fn report(
    State(state): State<Arc<StudyState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    Ok(Json(state.lock().report(&id)?).into_response())
}
