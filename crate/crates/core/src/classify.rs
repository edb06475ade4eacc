//! Per-sample adaptive classification.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::experience::render_experience_context;
use crate::gateway::prompts::{candidate_text, render_with};
use crate::gateway::{parse_prediction, Gateway, ParsedPrediction};
use crate::kb::KnowledgeBase;
use crate::retrieval::{retrieve, CandidateSet};
use crate::trigger::{trigger_score, TriggerDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Retrieval answer accepted.
    System1,
    /// Escalated and answered by the reasoning backend.
    System2,
    /// Escalated, but the backend failed or its answer matched no
    /// candidate; the retrieval top-1 is returned.
    System2Fallback,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::System1 => "system1",
            Route::System2 => "system2",
            Route::System2Fallback => "system2_fallback",
        }
    }

    pub fn escalated(self) -> bool {
        self != Route::System1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub retrieval: f64,
    pub trigger: f64,
    pub reasoning: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub label: String,
    pub route: Route,
    pub trigger: TriggerDecision,
    pub candidates: CandidateSet,
    pub latency_ms: StageLatency,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The escalation failed because the backend could not be reached.
    #[serde(skip)]
    pub backend_unreachable: bool,
}

impl Prediction {
    /// Checks the route invariants against the candidate set.
    pub fn check_route_invariant(&self) -> bool {
        let top1 = self.candidates.top1().map(|c| c.category_id.as_str());
        match self.route {
            Route::System1 | Route::System2Fallback => top1 == Some(self.label.as_str()),
            Route::System2 => self.candidates.contains(&self.label),
        }
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Renders the reasoning prompt for an escalated sample.
pub fn system2_prompt(
    cs: &CandidateSet,
    kb: &KnowledgeBase,
    gateway: &Gateway,
    cfg: &EngineConfig,
) -> Result<String> {
    let entries = kb.experience.retrieve_experience(cs, cfg.e_max);
    let context = render_experience_context(&entries, &kb.prototypes);
    let prompt = render_with(
        &gateway.templates.system2_inference,
        &[
            ("candidate_text", &candidate_text(cs)),
            ("experience_context", &context),
        ],
    )?;
    Ok(if cfg.inject_self_belief {
        format!("{}\n\n{prompt}", kb.experience.self_belief())
    } else {
        prompt
    })
}

/// Retrieves candidates, applies the trigger, and escalates to the
/// reasoning backend when the retrieval answer is not trusted.
///
/// Backend failures become a `System2Fallback` prediction carrying the
/// error text, unless `cfg.fail_hard` is set.
pub fn classify(
    sample: &SampleRecord,
    kb: &KnowledgeBase,
    gateway: Option<&Gateway>,
    cfg: &EngineConfig,
) -> Result<Prediction> {
    let start = Instant::now();
    let cs = retrieve(&sample.embedding, &kb.prototypes, &cfg.fusion, cfg.k_candidates)?;
    let mut latency = StageLatency {
        retrieval: elapsed_ms(start),
        ..Default::default()
    };

    let t = Instant::now();
    let decision = trigger_score(&cs, &kb.stats, &cfg.trigger)?;
    latency.trigger = elapsed_ms(t);

    let top1 = cs
        .top1()
        .map(|c| c.category_id.clone())
        .ok_or(Error::EmptyInput("candidate set is empty"))?;
    let mut pred = Prediction {
        sample_id: sample.sample_id.clone(),
        label: top1,
        route: Route::System1,
        trigger: decision,
        candidates: cs,
        latency_ms: latency,
        reasoning: None,
        error: None,
        backend_unreachable: false,
    };

    if !pred.trigger.accepted() {
        let t = Instant::now();
        pred.route = Route::System2Fallback;
        match gateway {
            None => pred.error = Some("no reasoning backend configured".into()),
            Some(gw) => {
                let prompt = system2_prompt(&pred.candidates, kb, gw, cfg)?;
                let images: Vec<String> = sample.image_ref.iter().cloned().collect();
                match gw.ask(prompt, &images) {
                    Ok(text) => {
                        match parse_prediction(&text, &pred.candidates) {
                            ParsedPrediction::Category(id) => {
                                pred.label = id;
                                pred.route = Route::System2;
                            }
                            ParsedPrediction::NoMatch => {
                                tracing::warn!(
                                    sample = %sample.sample_id,
                                    "backend answer matched no candidate, keeping retrieval top-1"
                                );
                                pred.error = Some("backend answer matched no candidate".into());
                            }
                        }
                        pred.reasoning = Some(text);
                    }
                    Err(e) if cfg.fail_hard => return Err(e.into()),
                    Err(e) => {
                        tracing::warn!(sample = %sample.sample_id, error = %e, "escalation failed, keeping retrieval top-1");
                        pred.backend_unreachable = e.is_unreachable();
                        pred.error = Some(e.to_string());
                    }
                }
            }
        }
        pred.latency_ms.reasoning = elapsed_ms(t);
    }
    pred.latency_ms.total = elapsed_ms(start);
    debug_assert!(pred.check_route_invariant());
    Ok(pred)
}
