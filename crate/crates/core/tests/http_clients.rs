use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine;
use bannerforge::extraction::{HttpTextGen, TextGenClient, TextGenRequest};
use bannerforge::imagegen::client::encode_png;
use bannerforge::imagegen::{GenParams, HttpImageGen, ImageGenClient, ImageGenRequest, MockImageGen};
use bannerforge::par::{Detector, HttpDetector};
use bannerforge::retry::RetryPolicy;
use bannerforge::service::ServiceError;
use serde_json::{json, Value};

#[derive(Default)]
struct Seen {
    bodies: Mutex<Vec<Value>>,
    auth: Mutex<Vec<Option<String>>>,
    calls: AtomicUsize,
}

type Shared = Arc<Seen>;

fn note(seen: &Seen, headers: &HeaderMap, body: Value) {
    seen.calls.fetch_add(1, Ordering::SeqCst);
    seen.bodies.lock().unwrap().push(body);
    seen.auth.lock().unwrap().push(
        headers
            .get("x-api-key")
            .map(|v| v.to_str().unwrap().to_string()),
    );
}

async fn textgen(State(s): State<Shared>, h: HeaderMap, Json(b): Json<Value>) -> Response {
    note(&s, &h, b);
    Json(json!({"text": "plush pig with soft fabric in a playroom"})).into_response()
}

async fn imagegen(State(s): State<Shared>, h: HeaderMap, Json(b): Json<Value>) -> Response {
    let req: ImageGenRequest = serde_json::from_value(b.clone()).unwrap();
    note(&s, &h, b);
    let png = encode_png(&MockImageGen::render(&req));
    Json(json!({"image_b64": base64::engine::general_purpose::STANDARD.encode(png)})).into_response()
}

async fn detector(State(s): State<Shared>, h: HeaderMap, Json(b): Json<Value>) -> Response {
    note(&s, &h, b);
    Json(json!({"detections": [{"label": "rug", "confidence": 0.9}, {"label": "sofa", "confidence": 0.1}]}))
        .into_response()
}

async fn flaky(State(s): State<Shared>, h: HeaderMap, Json(b): Json<Value>) -> Response {
    note(&s, &h, b);
    if s.calls.load(Ordering::SeqCst) < 3 {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    Json(json!({"text": "third time lucky"})).into_response()
}

async fn reject(State(s): State<Shared>, h: HeaderMap, Json(b): Json<Value>) -> Response {
    note(&s, &h, b);
    (StatusCode::BAD_REQUEST, "prompt too long").into_response()
}

async fn malformed(State(s): State<Shared>, h: HeaderMap, Json(b): Json<Value>) -> Response {
    note(&s, &h, b);
    "not json".into_response()
}

async fn bad_base64(State(s): State<Shared>, h: HeaderMap, Json(b): Json<Value>) -> Response {
    note(&s, &h, b);
    Json(json!({"image_b64": "***"})).into_response()
}

struct MockServer {
    addr: SocketAddr,
    seen: Shared,
}

impl MockServer {
    fn start() -> Self {
        let seen: Shared = Arc::default();
        let app = Router::new()
            .route("/textgen", post(textgen))
            .route("/imagegen", post(imagegen))
            .route("/detect", post(detector))
            .route("/flaky", post(flaky))
            .route("/reject", post(reject))
            .route("/malformed", post(malformed))
            .route("/bad-base64", post(bad_base64))
            .with_state(seen.clone());
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(1)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(listener, app).await.unwrap();
            });
        });
        Self { addr, seen }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    fn bodies(&self) -> Vec<Value> {
        self.seen.bodies.lock().unwrap().clone()
    }
}

fn text_request() -> TextGenRequest {
    TextGenRequest {
        prompt: "hello".into(),
        max_tokens: 80,
        temperature: 0.2,
        seed: Some(9),
    }
}

fn no_wait(attempts: u32) -> RetryPolicy {
    RetryPolicy {
        attempts,
        base_delay_ms: 0,
    }
}

#[test]
fn textgen_wire_contract_and_auth() {
    let server = MockServer::start();
    let client = HttpTextGen::new(&server.url("/textgen"), "X-Api-Key: secret").unwrap();
    let reply = client.complete(&text_request()).unwrap();
    assert_eq!(reply, "plush pig with soft fabric in a playroom");
    assert_eq!(
        server.bodies(),
        vec![json!({"prompt": "hello", "max_tokens": 80, "temperature": 0.2, "seed": 9})]
    );
    assert_eq!(*server.seen.auth.lock().unwrap(), vec![Some("secret".to_string())]);
}

#[test]
fn imagegen_wire_contract_and_decoding() {
    let server = MockServer::start();
    let client = HttpImageGen::new(&server.url("/imagegen"), "", Some("sdxl-test")).unwrap();
    let params = GenParams {
        width: 64,
        height: 64,
        steps: 12,
        guidance: 5.0,
        seed: 77,
    };
    let req = ImageGenRequest::new("pet beds", &params);
    let bytes = client.generate(&req).unwrap();
    assert_eq!(bytes, encode_png(&MockImageGen::render(&req)));
    assert_eq!(client.backend_id(), "sdxl-test");
    assert_eq!(
        server.bodies(),
        vec![json!({"prompt": "pet beds", "width": 64, "height": 64, "steps": 12, "guidance": 5.0, "seed": 77})]
    );
    assert_eq!(*server.seen.auth.lock().unwrap(), vec![None]);
}

#[test]
fn backend_id_defaults_to_url() {
    let c = HttpImageGen::new("http://127.0.0.1:9/x", "", None).unwrap();
    assert_eq!(c.backend_id(), "http://127.0.0.1:9/x");
}

#[test]
fn detector_wire_contract() {
    let server = MockServer::start();
    let client = HttpDetector::new(&server.url("/detect"), "").unwrap();
    let detections = client.detect(b"\x89PNG fake").unwrap();
    assert_eq!(detections.len(), 2);
    assert_eq!(detections[0].label, "rug");
    let b64 = base64::engine::general_purpose::STANDARD.encode(b"\x89PNG fake");
    assert_eq!(server.bodies(), vec![json!({ "image_b64": b64 })]);
}

#[test]
fn server_errors_are_retried() {
    let server = MockServer::start();
    let client = HttpTextGen::new(&server.url("/flaky"), "").unwrap();
    let reply = no_wait(3).run(|_| client.complete(&text_request())).unwrap();
    assert_eq!(reply, "third time lucky");
    assert_eq!(server.seen.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn retry_budget_is_respected() {
    let server = MockServer::start();
    let client = HttpTextGen::new(&server.url("/flaky"), "").unwrap();
    let err = no_wait(2).run(|_| client.complete(&text_request())).unwrap_err();
    assert!(matches!(err, ServiceError::Transport(_)));
    assert_eq!(server.seen.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start();
    let client = HttpTextGen::new(&server.url("/reject"), "").unwrap();
    let err = no_wait(5).run(|_| client.complete(&text_request())).unwrap_err();
    assert_eq!(
        err,
        ServiceError::Rejected {
            status: 400,
            reason: "prompt too long".into()
        }
    );
    assert_eq!(server.seen.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_replies_are_reported() {
    let server = MockServer::start();
    let text = HttpTextGen::new(&server.url("/malformed"), "").unwrap();
    assert!(matches!(text.complete(&text_request()), Err(ServiceError::MalformedReply(_))));
    let img = HttpImageGen::new(&server.url("/bad-base64"), "", None).unwrap();
    let req = ImageGenRequest::new("x", &GenParams::default());
    assert!(matches!(img.generate(&req), Err(ServiceError::MalformedReply(_))));
}

#[test]
fn unreachable_backend_is_a_transport_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let client = HttpTextGen::new(&format!("http://127.0.0.1:{port}/x"), "").unwrap();
    let err = client.complete(&text_request()).unwrap_err();
    assert!(err.is_retryable(), "{err}");
}
