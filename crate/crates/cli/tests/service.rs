use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use quoter::encoder::{DualEncoder, EncoderConfig};
use quoter::ranker::Recommender;
use quoter::synthetic::{toy_task, ToySpec};
use quoter::trainer::train_tokenizer;
use quoter::Exec;
use quoter_cli::service::{router, AppState, Health, RecommendResponse};
use serde_json::{json, Value};
use tower::ServiceExt;

/// Default-size backbone over the toy catalog, untrained.
fn recommender() -> Recommender {
    static REC: OnceLock<Recommender> = OnceLock::new();
    REC.get_or_init(|| {
        let task = toy_task(&ToySpec::default()).unwrap();
        let config = EncoderConfig::default();
        let tok = train_tokenizer(&task.dataset, config.vocab_limit);
        let enc = DualEncoder::new(config, tok, Some(task.lexicon)).unwrap();
        Recommender::new(enc, task.dataset.catalog, Exec::default()).unwrap()
    })
    .clone()
}

fn app(dev: bool) -> Router {
    router(Arc::new(AppState::new(recommender(), dev)), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn post(app: &Router, body: Value) -> (StatusCode, Vec<u8>) {
    call(app, "POST", "/api/recommend", Some(body.to_string())).await
}

#[tokio::test]
async fn health_reports_catalog_size() {
    let (status, body) = call(&app(false), "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_slice(&body).unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.catalog_size, 50);
}

#[tokio::test]
async fn recommend_returns_ranked_catalog_quotes() {
    let rec = recommender();
    let app = app(false);
    let (status, body) = post(&app, json!({"left": "the old river", "right": "ran dry", "k": 7})).await;
    assert_eq!(status, StatusCode::OK);
    let resp: RecommendResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(resp.model_fingerprint, rec.fingerprint());
    assert_eq!(resp.results.len(), 7);
    for (i, r) in resp.results.iter().enumerate() {
        assert_eq!(r.rank, i + 1);
        assert_eq!(rec.catalog().get(r.quote_id).unwrap().text, r.quote_text);
    }
    assert!(resp.results.windows(2).all(|w| w[0].score >= w[1].score));
    let direct = rec.recommend("the old river", "ran dry", 7).unwrap();
    for (a, b) in resp.results.iter().zip(&direct) {
        assert_eq!((a.quote_id, a.rank), (b.quote_id, b.rank));
        assert!((a.score - b.score).abs() < 1e-12);
    }

    // Omitted k and right side fall back to defaults.
    let (status, body) = post(&app, json!({"left": "the old river"})).await;
    assert_eq!(status, StatusCode::OK);
    let resp: RecommendResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(resp.results.len(), 5);
}

#[tokio::test]
async fn repeated_requests_agree_except_latency() {
    let app = app(false);
    let q = json!({"left": "words before", "right": "words after", "k": 10});
    let (_, a) = post(&app, q.clone()).await;
    let (_, b) = post(&app, q).await;
    let mut a: RecommendResponse = serde_json::from_slice(&a).unwrap();
    let mut b: RecommendResponse = serde_json::from_slice(&b).unwrap();
    a.latency_ms = 0.0;
    b.latency_ms = 0.0;
    assert_eq!(a, b);
}

#[tokio::test]
async fn malformed_requests_are_client_errors() {
    let app = app(false);
    for body in [
        json!({"left": "", "right": ""}),
        json!({"left": "  ", "right": null}),
        json!({"left": "text", "k": 0}),
        json!({"right": "no left field"}),
        json!({"left": "text", "k": -1}),
    ] {
        let (status, text) = post(&app, body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        let v: Value = serde_json::from_slice(&text).unwrap();
        assert!(v["error"].is_string());
    }
    let (status, _) = call(&app, "POST", "/api/recommend", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn fingerprint_mismatch_is_a_server_error() {
    let mut state = AppState::new(recommender(), false);
    state.fingerprint = "0".repeat(64);
    let app = router(Arc::new(state), None);
    let (status, body) = post(&app, json!({"left": "anything"})).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert!(v["error"].as_str().unwrap().contains("index"));
}

#[tokio::test]
async fn echo_only_in_dev_mode() {
    let body = json!({"left": "a", "right": "b", "k": 3}).to_string();
    let (status, _) = call(&app(false), "POST", "/api/echo", Some(body.clone())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, text) = call(&app(true), "POST", "/api/echo", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&text).unwrap();
    assert_eq!(v, json!({"left": "a", "right": "b", "k": 3}));
}

#[tokio::test]
async fn ui_directory_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>hi</p>").unwrap();
    let app = router(Arc::new(AppState::new(recommender(), false)), Some(dir.path().to_path_buf()));
    let (status, body) = call(&app, "GET", "/ui/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<p>hi</p>");
}

#[tokio::test(flavor = "multi_thread")]
async fn hundred_sequential_requests_under_five_seconds() {
    let app = app(false);
    // Warm-up outside the timed loop.
    post(&app, json!({"left": "warm"})).await;
    let started = Instant::now();
    for i in 0..100 {
        let (status, _) = post(&app, json!({"left": format!("context number {i} with some words"), "right": "and more"})).await;
        assert_eq!(status, StatusCode::OK);
    }
    let elapsed = started.elapsed();
    println!("100 requests in {elapsed:?}");
    assert!(elapsed < Duration::from_secs(5));
}
