use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use bandit_design::config::RunConfig;
use bandit_design::objective::{evaluate_designs, recommend};
use bandit_design_service::router;
use bandit_design_service::store::JobStore;
use serde_json::Value;
use tower::ServiceExt;

/// Two Bernoulli arms with a large gap, so every design is feasible fast.
fn config(seed: u64) -> String {
    format!(
        r#"{{
            "version": 1,
            "seed": {seed},
            "arms": 2,
            "prior": {{"kind": "fixed_vector", "means": [0.8, 0.3], "reward": "bernoulli"}},
            "test": {{"kind": "two_sample_t", "first": 0, "second": 1, "sidedness": "two_sided"}},
            "policy_family": "eps_thompson",
            "phis": [0.0, 0.5, 1.0],
            "w": 0.01,
            "w_grid": [0.0, 0.001, 0.01, 0.1],
            "t_max": 300,
            "replications": 200,
            "grid_points": 4
        }}"#
    )
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let json = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, json)
}

async fn submit(app: &Router, body: String) -> String {
    let (status, json) = call(app, Method::POST, "/api/v1/jobs", Some(body)).await;
    assert!(
        status == StatusCode::ACCEPTED || status == StatusCode::OK,
        "{status} {json}"
    );
    json["job_id"].as_str().unwrap().to_string()
}

/// Polls until the job leaves the queue, checking progress never drops.
async fn wait_done(app: &Router, id: &str) -> Value {
    let mut last = 0.0;
    for _ in 0..1200 {
        let (status, job) = call(app, Method::GET, &format!("/api/v1/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let progress = job["progress"].as_f64().unwrap();
        assert!(progress >= last, "progress went from {last} to {progress}");
        last = progress;
        match job["status"].as_str().unwrap() {
            "done" => return job,
            "failed" => panic!("job failed: {job}"),
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("job {id} did not finish");
}

fn app_in(dir: &std::path::Path) -> Router {
    router(Arc::new(JobStore::open(dir).unwrap()))
}

#[tokio::test(flavor = "multi_thread")]
async fn health() {
    let dir = tempfile::tempdir().unwrap();
    let (status, json) = call(&app_in(dir.path()), Method::GET, "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json["status"], "ok");
}

#[tokio::test(flavor = "multi_thread")]
async fn rejects_invalid_configs() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let one_arm = config(1).replace("\"arms\": 2", "\"arms\": 1");
    let (status, json) = call(&app, Method::POST, "/api/v1/jobs", Some(one_arm)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json["error"], "K must be ≥ 2");
    assert_eq!(json["field"], "arms");

    let no_seed = config(1).replace("\"seed\": 1,", "");
    let (status, json) = call(&app, Method::POST, "/api/v1/jobs", Some(no_seed)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(json["error"].as_str().unwrap().contains("seed"), "{json}");

    let (status, _) = call(&app, Method::POST, "/api/v1/jobs", Some("{".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_job_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    for uri in [
        "/api/v1/jobs/nope",
        "/api/v1/jobs/nope/ecp?w=0.1",
        "/api/v1/jobs/nope/curve",
    ] {
        let (status, _) = call(&app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn job_lifecycle_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let body = config(5);
    let id = submit(&app, body.clone()).await;
    assert_eq!(id.len(), 64);

    // Not done yet, or done already on a fast machine.
    let (status, _) = call(
        &app,
        Method::GET,
        &format!("/api/v1/jobs/{id}/ecp?w=0.01"),
        None,
    )
    .await;
    assert!(status == StatusCode::CONFLICT || status == StatusCode::OK);

    let job = wait_done(&app, &id).await;
    assert_eq!(job["progress"], 1.0);

    // Same config and seed through the library, as the CLI does it.
    let cfg = RunConfig::from_json(&body).unwrap();
    let eval = evaluate_designs(&cfg.problem(), cfg.seed).unwrap();
    let rec = recommend(&eval.points, cfg.w).unwrap();
    let served: bandit_design::objective::DesignRecommendation =
        serde_json::from_value(job["result"]["recommendation"].clone()).unwrap();
    assert_eq!(served, rec);
    assert_eq!(job["result"]["curves"].as_array().unwrap().len(), 3);

    // Resubmission returns the stored job.
    let (status, json) = call(&app, Method::POST, "/api/v1/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json["job_id"], id.as_str());
    assert_eq!(json["status"], "done");

    let (_, listed) = call(&app, Method::GET, "/api/v1/jobs", None).await;
    assert_eq!(listed.as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn ecp_endpoint_is_pure_and_piecewise_constant() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let id = submit(&app, config(9)).await;
    let job = wait_done(&app, &id).await;

    let uri = format!("/api/v1/jobs/{id}/ecp?w=0.01");
    let (status, a) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(a.to_string(), b.to_string());
    let best = a["designs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|d| d["relative_ecp"] == 0.0)
        .count();
    assert!(best >= 1);

    // At w = 0 the best design has the largest mean reward.
    let (_, zero) = call(
        &app,
        Method::GET,
        &format!("/api/v1/jobs/{id}/ecp?w=0"),
        None,
    )
    .await;
    let points = job["result"]["feasible_set"].as_array().unwrap();
    let top = points
        .iter()
        .filter(|p| !p["horizon"].is_null())
        .max_by(|x, y| {
            x["mean_reward"]
                .as_f64()
                .unwrap()
                .total_cmp(&y["mean_reward"].as_f64().unwrap())
        })
        .unwrap();
    assert_eq!(zero["best_phi"], top["phi"]);

    // Best parameter changes at most once per pair of designs as w grows.
    let mut changes = 0;
    let mut prev = None;
    for i in 0..=100 {
        let w = i as f64 / 1000.0;
        let (_, r) = call(
            &app,
            Method::GET,
            &format!("/api/v1/jobs/{id}/ecp?w={w}"),
            None,
        )
        .await;
        let phi = r["best_phi"].as_f64().unwrap();
        if prev.is_some_and(|p| p != phi) {
            changes += 1;
        }
        prev = Some(phi);
    }
    assert!(changes <= 3, "{changes} changes");

    let (status, curve) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}/curve"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(curve["w"].as_array().unwrap().len(), 4);
    assert_eq!(curve["best_phi"][2], a["best_phi"]);

    for bad in ["", "?w=abc", "?w=-1"] {
        let (status, _) = call(
            &app,
            Method::GET,
            &format!("/api/v1/jobs/{id}/ecp{bad}"),
            None,
        )
        .await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_keeps_completed_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app_in(dir.path());
        let id = submit(&app, config(3)).await;
        wait_done(&app, &id).await;
        id
    };
    let app = app_in(dir.path());
    let (status, job) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(job["status"], "done");
    let (status, _) = call(
        &app,
        Method::GET,
        &format!("/api/v1/jobs/{id}/ecp?w=0.1"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_jobs_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let seeds = [11, 12, 13];
    let mut ids = Vec::new();
    for s in seeds {
        ids.push(submit(&app, config(s)).await);
    }
    for (s, id) in seeds.iter().zip(&ids) {
        let job = wait_done(&app, id).await;
        let cfg = RunConfig::from_json(&config(*s)).unwrap();
        let eval = evaluate_designs(&cfg.problem(), cfg.seed).unwrap();
        let served: Vec<bandit_design::objective::DesignPoint> =
            serde_json::from_value(job["result"]["feasible_set"].clone()).unwrap();
        assert_eq!(served, eval.points, "seed {s}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unfinished_jobs_fail_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_json(&config(21)).unwrap();
    let store = JobStore::open(dir.path()).unwrap();
    store.submit(cfg.clone()).unwrap();
    drop(store);
    let store = JobStore::open(dir.path()).unwrap();
    let id = bandit_design_service::store::job_id(&cfg);
    let record = store.get(&id).unwrap();
    assert_eq!(
        record.status,
        bandit_design_service::store::JobStatus::Failed
    );
    assert!(record.error.unwrap().contains("restart"));
}
