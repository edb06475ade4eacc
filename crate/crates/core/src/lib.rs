//! Two-stage few-shot fine-grained classifier.
//!
//! A fast retrieval stage scores every category against fused visual and
//! textual prototypes. A trigger decides whether that answer is trusted or
//! whether the sample is escalated to a text-generation backend, which
//! reasons over the candidate list with help from an experience library
//! distilled from past mistakes.

pub mod classify;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod evaluate;
pub mod experience;
pub mod gateway;
pub mod io;
pub mod kb;
pub mod prototype;
pub mod retrieval;
pub mod serde_util;
pub mod service;
pub mod stats;
pub mod synthetic;
pub mod trigger;

pub use classify::{classify, Prediction, Route};
pub use config::{BackendSpec, EngineConfig};
pub use error::{Error, Result};
pub use evaluate::{evaluate, EvalReport};
pub use kb::{build_knowledge_bases, KnowledgeBase};
