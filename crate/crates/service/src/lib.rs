//! HTTP service for design-optimization jobs.
//!
//! Jobs are keyed by the SHA-256 of their config, so resubmitting the same
//! config and seed returns the stored job. Completed jobs survive restarts.
//! Score queries are answered from the stored design points without
//! simulating again.
//!
//! There is no authentication and CORS is open: this is a local tool, not
//! a multi-tenant deployment.

pub mod store;

use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use bandit_design::config::RunConfig;
use bandit_design::objective::{evaluate_designs_with_progress, recommend, relative_ecp_curve};
use serde::Serialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use store::{CurveRecord, JobRecord, JobResult, JobStatus, JobStore, Submitted};

pub type AppState = Arc<JobStore>;

/// Error body: `{"error": ..., "field": ...}`.
struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            field: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown job {id}"))
    }

    fn internal(err: anyhow::Error) -> Self {
        log::error!("{err:#}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{err:#}"))
    }
}

impl From<bandit_design::Error> for ApiError {
    fn from(err: bandit_design::Error) -> Self {
        match &err {
            bandit_design::Error::InvalidConfig { field, reason } => ApiError {
                status: StatusCode::BAD_REQUEST,
                message: reason.clone(),
                field: Some(field.clone()),
            },
            bandit_design::Error::NoFeasibleDesign => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, err.to_string())
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match self.field {
            Some(f) => json!({ "error": self.message, "field": f }),
            None => json!({ "error": self.message }),
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/jobs", get(list_jobs).post(submit_job))
        .route("/api/v1/jobs/{id}", get(get_job))
        .route("/api/v1/jobs/{id}/ecp", get(job_ecp))
        .route("/api/v1/jobs/{id}/curve", get(job_curve))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Serialize)]
struct JobSummary {
    job_id: String,
    status: JobStatus,
    progress: f64,
}

async fn list_jobs(State(store): State<AppState>) -> Json<Vec<JobSummary>> {
    Json(
        store
            .list()
            .into_iter()
            .map(|r| JobSummary {
                job_id: r.job_id,
                status: r.status,
                progress: r.progress,
            })
            .collect(),
    )
}

async fn submit_job(State(store): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "body is not UTF-8"))?;
    let config = RunConfig::from_json(text)?;
    match store.submit(config).map_err(ApiError::internal)? {
        Submitted::Queued(id) => {
            log::info!("queued job {id}");
            spawn_job(store, id.clone());
            Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id }))).into_response())
        }
        Submitted::Existing(id, status) => Ok((
            StatusCode::OK,
            Json(json!({ "job_id": id, "status": status })),
        )
            .into_response()),
    }
}

/// Runs a queued job on the blocking pool. Replications inside a job share
/// the global rayon pool.
pub fn spawn_job(store: AppState, id: String) {
    tokio::task::spawn_blocking(move || {
        if let Err(e) = run_job(&store, &id) {
            log::error!("job {id}: {e:#}");
        }
    });
}

fn run_job(store: &JobStore, id: &str) -> anyhow::Result<()> {
    let (config, progress) = store.start(id)?;
    let report = |f: f64| {
        progress.fetch_max(f.clamp(0.0, 1.0).to_bits(), Ordering::Relaxed);
    };
    let outcome = evaluate_designs_with_progress(&config.problem(), config.seed, &report)
        .and_then(|eval| {
            let recommendation = recommend(&eval.points, config.w)?;
            let curves = eval
                .points
                .iter()
                .zip(eval.curves)
                .map(|(p, c)| CurveRecord {
                    phi: p.phi,
                    beta: c.beta,
                    mean_reward: c.mean_reward,
                })
                .collect();
            Ok(JobResult {
                feasible_set: eval.points,
                curves,
                recommendation,
            })
        })
        .map_err(|e| e.to_string());
    match &outcome {
        Ok(_) => log::info!("job {id} done"),
        Err(e) => log::warn!("job {id} failed: {e}"),
    }
    store.finish(id, outcome)
}

fn find(store: &JobStore, id: &str) -> ApiResult<JobRecord> {
    store.get(id).ok_or_else(|| ApiError::not_found(id))
}

fn finished(store: &JobStore, id: &str) -> ApiResult<(JobRecord, JobResult)> {
    let mut record = find(store, id)?;
    match record.result.take() {
        Some(result) if record.status == JobStatus::Done => Ok((record, result)),
        _ => Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("job {id} is {:?}, not done", record.status).to_lowercase(),
        )),
    }
}

async fn get_job(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<JobRecord>> {
    Ok(Json(find(&store, &id)?))
}

#[derive(Serialize)]
struct EcpDesign {
    phi: f64,
    horizon: u64,
    mean_reward: f64,
    ecp: f64,
    /// Score minus the best score at this `w`; zero for the optimum.
    relative_ecp: f64,
}

#[derive(Serialize)]
struct EcpResponse {
    w: f64,
    best_phi: f64,
    designs: Vec<EcpDesign>,
    infeasible: Vec<f64>,
}

fn parse_w(query: &HashMap<String, String>) -> ApiResult<f64> {
    let bad = || ApiError {
        status: StatusCode::BAD_REQUEST,
        message: "w must be a finite number ≥ 0".into(),
        field: Some("w".into()),
    };
    let w: f64 = query.get("w").ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if w.is_finite() && w >= 0.0 {
        Ok(w)
    } else {
        Err(bad())
    }
}

async fn job_ecp(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Json<EcpResponse>> {
    let (_, result) = finished(&store, &id)?;
    let w = parse_w(&query)?;
    let rec = recommend(&result.feasible_set, w)?;
    let designs = rec
        .feasible_set
        .iter()
        .map(|d| EcpDesign {
            phi: d.phi,
            horizon: d.horizon,
            mean_reward: d.mean_reward,
            ecp: d.ecp,
            relative_ecp: d.ecp - rec.ecp,
        })
        .collect();
    Ok(Json(EcpResponse {
        w,
        best_phi: rec.phi,
        designs,
        infeasible: rec.infeasible,
    }))
}

/// Relative scores over the config's cost grid, for charting.
async fn job_curve(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<bandit_design::objective::RelativeEcpCurve>> {
    let (record, result) = finished(&store, &id)?;
    let curve = relative_ecp_curve(&result.recommendation.feasible_set, &record.config.w_grid())?;
    Ok(Json(curve))
}
