//! HTTP classify service.
//!
//! * `POST /classify` with `{"sample_id", "embedding": [..], "image_ref"?}`
//!   returns the prediction JSON. 400 on a malformed body or wrong
//!   dimension; 503 (with the fallback prediction as body) when the sample
//!   needed the reasoning backend and it could not be reached.
//! * `GET /stats` returns request and route counters and latency percentiles.
//! * `GET /healthz` returns `ok`.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::classify::{classify, Route};
use crate::config::EngineConfig;
use crate::dataset::SampleRecord;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::evaluate::{LatencySummary, RouteCounts};
use crate::gateway::Gateway;
use crate::kb::KnowledgeBase;

/// Latency samples kept for the percentile window.
const LATENCY_WINDOW: usize = 10_000;

#[derive(Debug, Deserialize)]
struct ClassifyRequest {
    sample_id: String,
    embedding: Vec<f64>,
    #[serde(default)]
    image_ref: Option<String>,
}

#[derive(Debug, Default)]
pub struct Metrics {
    requests: AtomicU64,
    system1: AtomicU64,
    system2: AtomicU64,
    system2_fallback: AtomicU64,
    bad_requests: AtomicU64,
    unavailable: AtomicU64,
    failures: AtomicU64,
    latencies: Mutex<VecDeque<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub requests: u64,
    pub routes: RouteCounts,
    pub bad_requests: u64,
    pub unavailable: u64,
    pub failures: u64,
    pub latency_ms: LatencySummary,
}

impl Metrics {
    fn route(&self, route: Route, latency_ms: f64) {
        let counter = match route {
            Route::System1 => &self.system1,
            Route::System2 => &self.system2,
            Route::System2Fallback => &self.system2_fallback,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        let mut lat = self.latencies.lock().unwrap_or_else(|p| p.into_inner());
        if lat.len() == LATENCY_WINDOW {
            lat.pop_front();
        }
        lat.push_back(latency_ms);
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let lat: Vec<f64> = self
            .latencies
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .copied()
            .collect();
        let load = |c: &AtomicU64| c.load(Ordering::Relaxed);
        StatsSnapshot {
            requests: load(&self.requests),
            routes: RouteCounts {
                system1: load(&self.system1) as usize,
                system2: load(&self.system2) as usize,
                system2_fallback: load(&self.system2_fallback) as usize,
            },
            bad_requests: load(&self.bad_requests),
            unavailable: load(&self.unavailable),
            failures: load(&self.failures),
            latency_ms: LatencySummary::from_samples(&lat),
        }
    }
}

pub struct ServiceState {
    pub kb: KnowledgeBase,
    pub gateway: Option<Gateway>,
    pub cfg: EngineConfig,
    pub metrics: Metrics,
}

impl ServiceState {
    pub fn new(kb: KnowledgeBase, gateway: Option<Gateway>, cfg: EngineConfig) -> Self {
        Self {
            kb,
            gateway,
            cfg,
            metrics: Metrics::default(),
        }
    }
}

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn classify_handler(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    state.metrics.requests.fetch_add(1, Ordering::Relaxed);
    let bad = |msg: String| {
        state.metrics.bad_requests.fetch_add(1, Ordering::Relaxed);
        error_response(StatusCode::BAD_REQUEST, msg)
    };
    let req: ClassifyRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad(format!("malformed request body: {e}")),
    };
    let embedding = match EmbeddingVector::from_f64(&req.embedding) {
        Ok(v) => v,
        Err(e) => return bad(format!("invalid embedding: {e}")),
    };
    if embedding.dim() != state.kb.dim() {
        return bad(format!(
            "embedding has dimension {} but the knowledge base expects {}",
            embedding.dim(),
            state.kb.dim()
        ));
    }
    let sample = SampleRecord {
        sample_id: req.sample_id,
        embedding,
        image_ref: req.image_ref,
        label: None,
    };
    // The reasoning backend may block on network I/O.
    let st = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        classify(&sample, &st.kb, st.gateway.as_ref(), &st.cfg)
    })
    .await;
    match result {
        Ok(Ok(pred)) => {
            state.metrics.route(pred.route, pred.latency_ms.total);
            if pred.backend_unreachable {
                state.metrics.unavailable.fetch_add(1, Ordering::Relaxed);
                (StatusCode::SERVICE_UNAVAILABLE, Json(pred)).into_response()
            } else {
                Json(pred).into_response()
            }
        }
        Ok(Err(e @ (Error::DimMismatch { .. } | Error::ZeroVector))) => bad(e.to_string()),
        Ok(Err(Error::Backend(e))) => {
            state.metrics.unavailable.fetch_add(1, Ordering::Relaxed);
            error_response(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
        }
        Ok(Err(e)) => {
            state.metrics.failures.fetch_add(1, Ordering::Relaxed);
            error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
        }
        Err(e) => {
            state.metrics.failures.fetch_add(1, Ordering::Relaxed);
            error_response(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}"))
        }
    }
}

async fn stats_handler(State(state): State<Arc<ServiceState>>) -> Json<StatsSnapshot> {
    Json(state.metrics.snapshot())
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/classify", post(classify_handler))
        .route("/stats", get(stats_handler))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_listener(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `addr` and serves until Ctrl-C.
pub fn serve(state: ServiceState, addr: SocketAddr) -> Result<()> {
    let state = Arc::new(state);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    let served = rt.block_on({
        let state = state.clone();
        async move {
            let listener = tokio::net::TcpListener::bind(addr)
                .await
                .map_err(|e| Error::io(addr.to_string(), e))?;
            tracing::info!(%addr, "serving");
            serve_listener(listener, state, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::io(addr.to_string(), e))
        }
    });
    drop(rt);
    // Dropped outside the runtime: a blocking HTTP client may live in here.
    drop(state);
    served
}
