use std::sync::OnceLock;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use qsat_core::bundle::ModelBundle;
use qsat_core::fixture::{fixture_bundle, fixture_request};
use qsat_core::service::ServiceState;
use qsat_server::{reload, router, serve, AppState};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tower::ServiceExt;

fn bundle() -> &'static ModelBundle {
    static B: OnceLock<ModelBundle> = OnceLock::new();
    B.get_or_init(fixture_bundle)
}

async fn call(app: &AppState, req: Request<Body>) -> (StatusCode, String) {
    let resp = router(app.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn post(body: &str) -> Request<Body> {
    Request::post("/api/v1/predict")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(path: &str) -> Request<Body> {
    Request::get(path).body(Body::empty()).unwrap()
}

#[tokio::test]
async fn health_reports_version() {
    let app = AppState::new(bundle().clone());
    let (status, body) = call(&app, get("/healthz")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["model_version"], json!(bundle().model_version()));
}

#[tokio::test]
async fn predict_matches_core_handler() {
    let app = AppState::new(bundle().clone());
    let req = fixture_request();
    let (status, body) = call(&app, post(&req.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    let expected = ServiceState::new(bundle().clone()).handle_predict(&req).unwrap().to_json();
    assert_eq!(body, expected);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["per_model"].as_object().unwrap().len(), 10);
    assert!(v["recommended_n"].as_u64().unwrap() >= 1);
}

#[tokio::test]
async fn invalid_score_is_422_naming_the_field() {
    let app = AppState::new(bundle().clone());
    let mut req = fixture_request();
    req["scores"]["information_power"] = json!(99);
    let (status, body) = call(&app, post(&req.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["error"]["field"], "scores.information_power");
    assert!(v["error"]["message"].as_str().unwrap().contains("99"));
}

#[tokio::test]
async fn bad_alpha_and_design_are_422() {
    let app = AppState::new(bundle().clone());
    let mut req = fixture_request();
    req["alpha"] = json!(1.5);
    let (status, body) = call(&app, post(&req.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body.contains(r#""field":"alpha""#));
    let mut req = fixture_request();
    req["design"] = json!("survey");
    let (status, body) = call(&app, post(&req.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body.contains(r#""field":"design""#));
}

#[tokio::test]
async fn malformed_json_is_400() {
    let app = AppState::new(bundle().clone());
    let (status, body) = call(&app, post("{\"design\": ")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert!(v["error"]["message"].as_str().unwrap().starts_with("malformed JSON"));
}

#[tokio::test]
async fn models_lists_nine_rows() {
    let app = AppState::new(bundle().clone());
    let (status, body) = call(&app, get("/api/v1/models")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 9);
}

#[tokio::test]
async fn importances_are_normalised() {
    let app = AppState::new(bundle().clone());
    let (status, body) = call(&app, get("/api/v1/importance")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    for method in ["impurity", "permutation"] {
        let sum: f64 = v[method].as_object().unwrap().values().map(|x| x.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "{method} sums to {sum}");
    }
}

#[tokio::test]
async fn unknown_route_is_404() {
    let app = AppState::new(bundle().clone());
    let (status, _) = call(&app, get("/api/v2/predict")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

/// Minimal HTTP/1.1 exchange over a fresh connection; returns (status, body).
async fn raw_request(addr: std::net::SocketAddr, head: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(head.as_bytes()).await.unwrap();
    s.write_all(body.as_bytes()).await.unwrap();
    read_response(s).await
}

async fn read_response(mut s: TcpStream) -> (u16, String) {
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8(buf).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, body.to_string())
}

fn predict_head(len: usize) -> String {
    format!(
        "POST /api/v1/predict HTTP/1.1\r\nHost: test\r\nContent-Type: application/json\r\n\
         Content-Length: {len}\r\nConnection: close\r\n\r\n"
    )
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_get_identical_bytes() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, AppState::new(bundle().clone()), async {
        let _ = stopped.await;
    }));
    let body = fixture_request().to_string();
    let tasks: Vec<_> = (0..64)
        .map(|_| {
            let body = body.clone();
            tokio::spawn(async move { raw_request(addr, &predict_head(body.len()), &body).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, b) = t.await.unwrap();
        assert_eq!(status, 200);
        bodies.push(b);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn in_flight_request_completes_during_shutdown() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, AppState::new(bundle().clone()), async {
        let _ = stopped.await;
    }));
    let body = fixture_request().to_string();
    let (first, rest) = body.split_at(body.len() / 2);
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(predict_head(body.len()).as_bytes()).await.unwrap();
    s.write_all(first.as_bytes()).await.unwrap();
    tokio::time::sleep(Duration::from_millis(200)).await;
    stop.send(()).unwrap();
    tokio::time::sleep(Duration::from_millis(200)).await;
    assert!(!server.is_finished(), "server exited with a request in flight");
    s.write_all(rest.as_bytes()).await.unwrap();
    let (status, resp) = read_response(s).await;
    assert_eq!(status, 200);
    assert!(resp.contains("recommended_n"));
    tokio::time::timeout(Duration::from_secs(10), server)
        .await
        .expect("server drains and exits")
        .unwrap()
        .unwrap();
}

#[tokio::test]
async fn swap_changes_version_and_old_snapshots_survive() {
    let app = AppState::new(bundle().clone());
    let before = app.snapshot();
    let mut next = bundle().clone();
    next.metadata.seed += 1;
    let version = app.swap(next);
    assert_ne!(version, before.model_version);
    assert_eq!(app.snapshot().model_version, version);
    assert_eq!(before.model_version, bundle().model_version());
    let (_, body) = call(&app, get("/healthz")).await;
    assert!(body.contains(&version));
}

#[tokio::test]
async fn reload_from_file_and_bad_file_keeps_current() {
    let dir = std::env::temp_dir().join(format!("qsat-reload-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let app = AppState::new(bundle().clone());
    let mut next = bundle().clone();
    next.metadata.seed += 2;
    let good = dir.join("next.qsat.json");
    next.save(&good).unwrap();
    let version = reload(&app, &good).unwrap();
    assert_eq!(version, next.model_version());
    let bad = dir.join("bad.qsat.json");
    std::fs::write(&bad, "{\"format_version\": 99}").unwrap();
    assert!(reload(&app, &bad).is_err());
    assert_eq!(app.snapshot().model_version, version);
    std::fs::remove_dir_all(&dir).unwrap();
}
