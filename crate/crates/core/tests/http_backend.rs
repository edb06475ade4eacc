use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use sare_core::gateway::{
    generate, Backend, BackendConfig, BackendError, GenerationRequest, HttpBackend, WireProtocol,
};

#[derive(Default)]
struct Seen {
    calls: AtomicUsize,
    bodies: Mutex<Vec<Value>>,
    headers: Mutex<Vec<HeaderMap>>,
}

type Shared = Arc<Seen>;

fn record(s: &Seen, headers: HeaderMap, body: Value) -> usize {
    s.bodies.lock().unwrap().push(body);
    s.headers.lock().unwrap().push(headers);
    s.calls.fetch_add(1, Ordering::SeqCst) + 1
}

async fn native(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> impl IntoResponse {
    record(&s, headers, body);
    Json(json!({"text": "Reasoning: fur.\nPrediction: Siberian Husky"}))
}

async fn chat(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> impl IntoResponse {
    record(&s, headers, body);
    Json(json!({"choices": [{"message": {"role": "assistant", "content": "Prediction: Malamute"}}]}))
}

async fn flaky(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> impl IntoResponse {
    if record(&s, headers, body) <= 2 {
        (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response()
    } else {
        Json(json!({"text": "third time"})).into_response()
    }
}

async fn rejects(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> impl IntoResponse {
    record(&s, headers, body);
    (StatusCode::BAD_REQUEST, "bad model name")
}

async fn slow(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> impl IntoResponse {
    record(&s, headers, body);
    tokio::time::sleep(Duration::from_secs(3)).await;
    Json(json!({"text": "late"}))
}

async fn garbage(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> impl IntoResponse {
    record(&s, headers, body);
    "<html>not json</html>"
}

struct MockServer {
    addr: SocketAddr,
    seen: Shared,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    fn start() -> Self {
        let seen = Shared::default();
        let app = Router::new()
            .route("/native", post(native))
            .route("/chat", post(chat))
            .route("/flaky", post(flaky))
            .route("/rejects", post(rejects))
            .route("/slow", post(slow))
            .route("/garbage", post(garbage))
            .with_state(seen.clone());
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        Self {
            addr: addr_rx.recv().unwrap(),
            seen,
            stop: Some(stop_tx),
            thread: Some(thread),
        }
    }

    fn config(&self, path: &str) -> BackendConfig {
        BackendConfig {
            endpoint_url: format!("http://{}{path}", self.addr),
            auth_token: Some("secret-token".into()),
            model_name: "test-model".into(),
            timeout_ms: 2_000,
            max_retries: 2,
            backoff_ms: 10,
            protocol: WireProtocol::Native,
        }
    }

    fn calls(&self) -> usize {
        self.seen.calls.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn request() -> GenerationRequest {
    GenerationRequest {
        prompt_text: "Which breed?".into(),
        image_refs: vec!["img/0042.jpg".into()],
        max_tokens: 128,
        temperature: 0.0,
    }
}

#[test]
fn native_protocol_round_trip() {
    let server = MockServer::start();
    let backend = HttpBackend::new(server.config("/native"));
    let text = generate(&backend, &request()).unwrap();
    assert!(text.ends_with("Prediction: Siberian Husky"));

    let body = server.seen.bodies.lock().unwrap()[0].clone();
    assert_eq!(
        body,
        json!({
            "model": "test-model",
            "messages": [{"role": "user", "content": [
                {"type": "text", "text": "Which breed?"},
                {"type": "image_ref", "ref": "img/0042.jpg"}
            ]}],
            "max_tokens": 128,
            "temperature": 0.0
        })
    );
    let headers = server.seen.headers.lock().unwrap()[0].clone();
    assert_eq!(headers["authorization"], "Bearer secret-token");
    assert!(headers["x-request-id"].to_str().unwrap().starts_with("sare-"));
}

#[test]
fn chat_completions_adapter() {
    let server = MockServer::start();
    let mut cfg = server.config("/chat");
    cfg.protocol = WireProtocol::ChatCompletions;
    let backend = HttpBackend::new(cfg);
    assert_eq!(backend.generate(&request()).unwrap(), "Prediction: Malamute");
    let body = server.seen.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["messages"][0]["content"][1]["image_url"]["url"], "img/0042.jpg");
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = MockServer::start();
    let backend = HttpBackend::new(server.config("/flaky"));
    assert_eq!(backend.generate(&request()).unwrap(), "third time");
    assert_eq!(server.calls(), 3);
    // One logical request: every attempt carries the same id.
    let ids: Vec<String> = server
        .seen
        .headers
        .lock()
        .unwrap()
        .iter()
        .map(|h| h["x-request-id"].to_str().unwrap().to_string())
        .collect();
    assert!(ids.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn retries_are_bounded() {
    let server = MockServer::start();
    let mut cfg = server.config("/flaky");
    cfg.max_retries = 1;
    let err = HttpBackend::new(cfg).generate(&request()).unwrap_err();
    assert!(matches!(err, BackendError::BadStatus { code: 503, .. }));
    assert_eq!(server.calls(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start();
    let err = HttpBackend::new(server.config("/rejects")).generate(&request()).unwrap_err();
    match err {
        BackendError::BadStatus { code, body, request_id } => {
            assert_eq!(code, 400);
            assert_eq!(body, "bad model name");
            assert!(!request_id.is_empty());
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.calls(), 1);
}

#[test]
fn non_json_response_is_a_protocol_error() {
    let server = MockServer::start();
    let err = HttpBackend::new(server.config("/garbage")).generate(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let cfg = BackendConfig {
        endpoint_url: format!("http://{addr}/generate"),
        max_retries: 2,
        backoff_ms: 5,
        ..Default::default()
    };
    let err = HttpBackend::new(cfg).generate(&request()).unwrap_err();
    assert!(matches!(err, BackendError::Transport { .. }), "{err:?}");
    assert!(err.is_unreachable());
}

#[test]
fn timeout_is_bounded() {
    let server = MockServer::start();
    let mut cfg = server.config("/slow");
    cfg.timeout_ms = 200;
    cfg.max_retries = 1;
    cfg.backoff_ms = 10;
    let start = Instant::now();
    let err = HttpBackend::new(cfg).generate(&request()).unwrap_err();
    let elapsed = start.elapsed();
    assert!(matches!(err, BackendError::Timeout { .. }), "{err:?}");
    // timeout x (retries + 1) + backoff, with slack for scheduling
    assert!(elapsed < Duration::from_millis(200 * 2 + 10 + 1_000), "{elapsed:?}");
    assert_eq!(server.calls(), 2);
}
