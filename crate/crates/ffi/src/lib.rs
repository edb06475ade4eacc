//! C interface to the classification engine.
//!
//! Handles are opaque. Every fallible call returns a [`SareStatus`]; on
//! failure the message is available from [`sare_last_error`] on the same
//! thread until the next call into this library. Strings returned as
//! `*mut c_char` are owned by the caller and released with
//! [`sare_string_free`]; `*const c_char` results are borrowed from the
//! handle they came from.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sare_core::dataset::SampleRecord;
use sare_core::embedding::EmbeddingVector;
use sare_core::gateway::Gateway;
use sare_core::{BackendSpec, EngineConfig, Error, KnowledgeBase, Prediction, Route};

/// Result codes shared by all fallible functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SareStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    DataError = 4,
    BackendError = 5,
    Panic = 6,
}

/// Which path produced a prediction.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SareRoute {
    System1 = 0,
    System2 = 1,
    System2Fallback = 2,
}

/// A loaded knowledge base plus backend and configuration.
pub struct SareEngine {
    kb: KnowledgeBase,
    gateway: Option<Gateway>,
    cfg: EngineConfig,
}

/// One classification result.
pub struct SarePrediction {
    inner: Prediction,
    label: CString,
    sample_id: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: SareStatus, msg: impl Into<String>) -> SareStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> SareStatus {
    match err {
        Error::DimMismatch { .. } => SareStatus::DimensionMismatch,
        Error::Backend(_) => SareStatus::BackendError,
        Error::InvalidConfig(_) | Error::ZeroVector | Error::InvalidRank(_) | Error::EmptyInput(_) => {
            SareStatus::InvalidArgument
        }
        _ => SareStatus::DataError,
    }
}

fn from_error(err: Error) -> SareStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `f`, converting panics into [`SareStatus::Panic`].
fn guard(f: impl FnOnce() -> SareStatus) -> SareStatus {
    clear_error();
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        fail(SareStatus::Panic, format!("panic: {msg}"))
    })
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SareStatus> {
    if p.is_null() {
        return Err(fail(SareStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SareStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

/// Loads the knowledge base in `kb_dir` and opens `backend`, which uses the
/// command-line syntax: `none`, `mock:<rules.json>`, `http[:<url>]` or
/// `chat:<url>`. A null `backend` means `none`.
///
/// # Safety
/// `kb_dir` and `backend` must be null or valid NUL-terminated strings, and
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sare_engine_open(
    kb_dir: *const c_char,
    backend: *const c_char,
    out: *mut *mut SareEngine,
) -> SareStatus {
    guard(|| {
        if out.is_null() {
            return fail(SareStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let dir = match str_arg(kb_dir, "kb_dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        let spec: BackendSpec = if backend.is_null() {
            BackendSpec::None
        } else {
            match str_arg(backend, "backend").map(str::parse) {
                Ok(Ok(spec)) => spec,
                Ok(Err(msg)) => return fail(SareStatus::InvalidArgument, msg),
                Err(s) => return s,
            }
        };
        let kb = match KnowledgeBase::load(Path::new(dir)) {
            Ok(kb) => kb,
            Err(e) => return from_error(e),
        };
        let cfg = EngineConfig::default();
        let gateway = match spec.open() {
            Ok(b) => b.map(|b| cfg.gateway(b)),
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(SareEngine { kb, gateway, cfg }));
        SareStatus::Ok
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must be null or a handle from [`sare_engine_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sare_engine_free(engine: *mut SareEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Replaces the trigger parameters. Pass `-INFINITY` for `theta` to send
/// every sample whose category has never been observed, and only those,
/// to the reasoning backend.
///
/// # Safety
/// `engine` must be a live handle not used concurrently from another thread.
#[no_mangle]
pub unsafe extern "C" fn sare_engine_set_trigger(
    engine: *mut SareEngine,
    theta: f64,
    eta: f64,
    alpha: f64,
) -> SareStatus {
    guard(|| {
        let Some(engine) = engine.as_mut() else {
            return fail(SareStatus::NullPointer, "engine is null");
        };
        let mut cfg = engine.cfg.clone();
        cfg.trigger.theta = theta;
        cfg.trigger.eta = eta;
        cfg.trigger.alpha = alpha;
        if let Err(e) = cfg.validate() {
            return from_error(e);
        }
        engine.cfg = cfg;
        SareStatus::Ok
    })
}

/// Embedding dimension expected by [`sare_classify`], or 0 for null.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sare_engine_dim(engine: *const SareEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.kb.dim())
}

/// Number of categories in the knowledge base, or 0 for null.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sare_engine_num_categories(engine: *const SareEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.kb.prototypes.len())
}

/// Classifies one embedding. `image_ref` may be null. Backend failures do
/// not fail the call: the prediction falls back to the top-1 candidate and
/// carries the error text in its JSON form.
///
/// The engine may be shared across threads for this call.
///
/// # Safety
/// `engine` must be a live handle, `sample_id` a valid NUL-terminated
/// string, `embedding` must point to `len` readable floats, `image_ref`
/// null or a valid string, and `out` a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sare_classify(
    engine: *const SareEngine,
    sample_id: *const c_char,
    embedding: *const f32,
    len: usize,
    image_ref: *const c_char,
    out: *mut *mut SarePrediction,
) -> SareStatus {
    guard(|| {
        if out.is_null() {
            return fail(SareStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(engine) = engine.as_ref() else {
            return fail(SareStatus::NullPointer, "engine is null");
        };
        if embedding.is_null() {
            return fail(SareStatus::NullPointer, "embedding is null");
        }
        let id = match str_arg(sample_id, "sample_id") {
            Ok(s) => s.to_string(),
            Err(s) => return s,
        };
        let image_ref = if image_ref.is_null() {
            None
        } else {
            match str_arg(image_ref, "image_ref") {
                Ok(s) => Some(s.to_string()),
                Err(s) => return s,
            }
        };
        let values = std::slice::from_raw_parts(embedding, len).to_vec();
        let embedding = match EmbeddingVector::new(values) {
            Ok(v) => v,
            Err(e) => return from_error(e),
        };
        let sample = SampleRecord {
            sample_id: id,
            embedding,
            image_ref,
            label: None,
        };
        let pred = match sare_core::classify(&sample, &engine.kb, engine.gateway.as_ref(), &engine.cfg) {
            Ok(p) => p,
            Err(e) => return from_error(e),
        };
        let (Ok(label), Ok(sample_id)) = (CString::new(pred.label.clone()), CString::new(pred.sample_id.clone()))
        else {
            return fail(SareStatus::DataError, "identifier contains a NUL byte");
        };
        *out = Box::into_raw(Box::new(SarePrediction {
            inner: pred,
            label,
            sample_id,
        }));
        SareStatus::Ok
    })
}

/// Releases a prediction. Null is ignored.
///
/// # Safety
/// `pred` must be null or a handle from [`sare_classify`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sare_prediction_free(pred: *mut SarePrediction) {
    if !pred.is_null() {
        drop(Box::from_raw(pred));
    }
}

/// Predicted category id, borrowed from `pred`. Null for a null handle.
///
/// # Safety
/// `pred` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sare_prediction_label(pred: *const SarePrediction) -> *const c_char {
    pred.as_ref().map_or(ptr::null(), |p| p.label.as_ptr())
}

/// Sample id, borrowed from `pred`. Null for a null handle.
///
/// # Safety
/// `pred` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sare_prediction_sample_id(pred: *const SarePrediction) -> *const c_char {
    pred.as_ref().map_or(ptr::null(), |p| p.sample_id.as_ptr())
}

/// Route taken. A null handle reports `System1`.
///
/// # Safety
/// `pred` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sare_prediction_route(pred: *const SarePrediction) -> SareRoute {
    match pred.as_ref().map(|p| p.inner.route) {
        Some(Route::System2) => SareRoute::System2,
        Some(Route::System2Fallback) => SareRoute::System2Fallback,
        _ => SareRoute::System1,
    }
}

/// Trigger score of the prediction; `-INFINITY` for categories never
/// observed and NaN for a null handle.
///
/// # Safety
/// `pred` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sare_prediction_score(pred: *const SarePrediction) -> f64 {
    pred.as_ref().map_or(f64::NAN, |p| p.inner.trigger.score)
}

/// Full prediction as JSON. Free the result with [`sare_string_free`].
/// Returns null for a null handle.
///
/// # Safety
/// `pred` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sare_prediction_to_json(pred: *const SarePrediction) -> *mut c_char {
    let Some(p) = pred.as_ref() else {
        set_error("pred is null");
        return ptr::null_mut();
    };
    match serde_json::to_string(&p.inner).map(CString::new) {
        Ok(Ok(s)) => s.into_raw(),
        Ok(Err(e)) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from [`sare_prediction_to_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sare_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reciprocal rank fusion term for 1-based ranks.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn sare_rrf_score(rank_visual: usize, rank_textual: usize, kappa: f64, out: *mut f64) -> SareStatus {
    guard(|| {
        if out.is_null() {
            return fail(SareStatus::NullPointer, "out is null");
        }
        match sare_core::retrieval::rrf_score(rank_visual, rank_textual, kappa) {
            Ok(v) => {
                *out = v;
                SareStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Uncertainty penalty for a category seen `n_c` times out of `total_n`
/// retrievals. `INFINITY` when `n_c` is 0.
#[no_mangle]
pub extern "C" fn sare_uncertainty_penalty(total_n: u64, n_c: u64) -> f64 {
    sare_core::stats::hoeffding_penalty(total_n, n_c)
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sare_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Borrowed until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sare_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
