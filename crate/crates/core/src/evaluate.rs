//! Batch evaluation over a labeled test set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, Prediction, Route};
use crate::config::EngineConfig;
use crate::dataset::{require_labels, SampleRecord};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::io;
use crate::kb::KnowledgeBase;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCounts {
    pub system1: usize,
    pub system2: usize,
    pub system2_fallback: usize,
}

impl RouteCounts {
    pub fn add(&mut self, route: Route) {
        match route {
            Route::System1 => self.system1 += 1,
            Route::System2 => self.system2 += 1,
            Route::System2Fallback => self.system2_fallback += 1,
        }
    }

    pub fn escalated(&self) -> usize {
        self.system2 + self.system2_fallback
    }

    pub fn total(&self) -> usize {
        self.system1 + self.escalated()
    }
}

/// Raw counts over successfully classified samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub n: usize,
    pub correct: usize,
    /// Retrieval top-1 was correct, whatever the route.
    pub system1_top1_correct: usize,
    pub accepted: usize,
    pub accepted_correct: usize,
    pub escalated: usize,
    pub escalated_correct: usize,
}

impl Tally {
    fn add(&mut self, p: &Prediction, truth: &str) {
        let correct = p.label == truth;
        let top1_correct = p.candidates.top1().is_some_and(|c| c.category_id == truth);
        self.n += 1;
        self.correct += usize::from(correct);
        self.system1_top1_correct += usize::from(top1_correct);
        if p.route.escalated() {
            self.escalated += 1;
            self.escalated_correct += usize::from(correct);
        } else {
            self.accepted += 1;
            self.accepted_correct += usize::from(correct);
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub tally: Tally,
    pub accuracy: Option<f64>,
    pub trigger_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let pick = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: pick(0.50),
            p95: pick(0.95),
            p99: pick(0.99),
            max: v[v.len() - 1],
        }
    }
}

/// Aggregate metrics. Fractions are over successfully classified samples
/// and are `null` when their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub errors: usize,
    pub tally: Tally,
    pub routes: RouteCounts,
    pub top1_accuracy: Option<f64>,
    pub system1_top1_accuracy: Option<f64>,
    pub trigger_rate: Option<f64>,
    pub accept_rate: Option<f64>,
    pub system1_accepted_accuracy: Option<f64>,
    pub escalated_accuracy: Option<f64>,
    pub per_category: BTreeMap<String, CategoryReport>,
    pub config: EngineConfig,
    pub latency_ms: LatencySummary,
    pub generated_at: u64,
}

/// Fields that differ between otherwise identical runs.
pub const VOLATILE_FIELDS: [&str; 2] = ["latency_ms", "generated_at"];

impl EvalReport {
    /// The report as JSON with latency and timestamp fields removed.
    pub fn stable_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            for f in VOLATILE_FIELDS {
                obj.remove(f);
            }
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

/// One classified sample, or the error that stopped it.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub truth: String,
    pub result: std::result::Result<Prediction, String>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub outcomes: Vec<SampleOutcome>,
}

/// Classifies every sample (in parallel) and aggregates the metrics.
/// Per-sample failures are counted in `errors` rather than aborting.
pub fn evaluate(
    test: &[SampleRecord],
    kb: &KnowledgeBase,
    gateway: Option<&Gateway>,
    cfg: &EngineConfig,
) -> Result<Evaluation> {
    cfg.validate()?;
    require_labels(test)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<SampleOutcome> = pool.install(|| {
        test.par_iter()
            .map(|s| SampleOutcome {
                sample_id: s.sample_id.clone(),
                truth: s.label.clone().unwrap_or_default(),
                result: classify(s, kb, gateway, cfg).map_err(|e| e.to_string()),
            })
            .collect()
    });
    let report = aggregate(&outcomes, cfg);
    Ok(Evaluation { report, outcomes })
}

pub fn aggregate(outcomes: &[SampleOutcome], cfg: &EngineConfig) -> EvalReport {
    let mut tally = Tally::default();
    let mut routes = RouteCounts::default();
    let mut per_cat: BTreeMap<String, Tally> = BTreeMap::new();
    let mut latencies = Vec::new();
    let mut errors = 0;
    for o in outcomes {
        match &o.result {
            Ok(p) => {
                tally.add(p, &o.truth);
                routes.add(p.route);
                per_cat.entry(o.truth.clone()).or_default().add(p, &o.truth);
                latencies.push(p.latency_ms.total);
            }
            Err(e) => {
                errors += 1;
                tracing::warn!(sample = %o.sample_id, error = %e, "sample failed");
            }
        }
    }
    let per_category = per_cat
        .into_iter()
        .map(|(id, t)| {
            (
                id,
                CategoryReport {
                    tally: t,
                    accuracy: ratio(t.correct, t.n),
                    trigger_rate: ratio(t.escalated, t.n),
                },
            )
        })
        .collect();
    EvalReport {
        samples: outcomes.len(),
        errors,
        tally,
        routes,
        top1_accuracy: ratio(tally.correct, tally.n),
        system1_top1_accuracy: ratio(tally.system1_top1_correct, tally.n),
        trigger_rate: ratio(tally.escalated, tally.n),
        accept_rate: ratio(tally.accepted, tally.n),
        system1_accepted_accuracy: ratio(tally.accepted_correct, tally.accepted),
        escalated_accuracy: ratio(tally.escalated_correct, tally.escalated),
        per_category,
        config: cfg.clone(),
        latency_ms: LatencySummary::from_samples(&latencies),
        generated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

/// `report.json` -> `report.routes.csv`.
pub fn routes_path(report_path: &Path) -> PathBuf {
    report_path.with_extension("routes.csv")
}

pub fn write_routes_csv(path: &Path, outcomes: &[SampleOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(path.display().to_string(), e.to_string());
    w.write_record([
        "sample_id", "truth", "predicted", "route", "correct", "top1", "p_hat", "score", "error",
    ])
    .map_err(csv_err)?;
    for o in outcomes {
        let row = match &o.result {
            Ok(p) => [
                o.sample_id.clone(),
                o.truth.clone(),
                p.label.clone(),
                p.route.as_str().to_string(),
                (p.label == o.truth).to_string(),
                p.candidates.top1().map(|c| c.category_id.clone()).unwrap_or_default(),
                format!("{:.6}", p.trigger.p_hat),
                format!("{:.6}", p.trigger.score),
                p.error.clone().unwrap_or_default(),
            ],
            Err(e) => [
                o.sample_id.clone(),
                o.truth.clone(),
                String::new(),
                "error".into(),
                "false".into(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ],
        };
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    io::write_atomic(path, &bytes)
}

/// Writes the report JSON and the per-sample routes CSV next to it.
pub fn write_evaluation(report_path: &Path, eval: &Evaluation) -> Result<PathBuf> {
    io::write_json(report_path, &eval.report)?;
    let csv_path = routes_path(report_path);
    write_routes_csv(&csv_path, &eval.outcomes)?;
    Ok(csv_path)
}
