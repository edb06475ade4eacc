//! Accept/escalate decision for the System-1 top-1 candidate.
//!
//! ```text
//! G(c) = p_hat(c) - eta * sqrt(ln N / (2 n_c)) - alpha * H
//! ```
//!
//! `H` is the entropy of the top-K `p_hat` values renormalized to a
//! distribution, optionally divided by `ln K`. The sample is accepted iff `G`
//! is finite and `G >= theta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::CandidateSet;
use crate::stats::StatsLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerConfig {
    pub eta: f64,
    pub alpha: f64,
    #[serde(with = "crate::serde_util::extended_f64")]
    pub theta: f64,
    pub normalize_entropy: bool,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            alpha: 0.2,
            theta: 0.5,
            normalize_entropy: true,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !(self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta ({}) and alpha ({}) must be nonnegative",
                self.eta, self.alpha
            )));
        }
        if self.theta.is_nan() {
            return Err(Error::InvalidConfig("theta is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Escalate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerDecision {
    /// `-inf` when the top-1 category has no retrieval history.
    #[serde(with = "crate::serde_util::extended_f64")]
    pub score: f64,
    pub entropy: f64,
    #[serde(with = "crate::serde_util::extended_f64")]
    pub penalty: f64,
    pub p_hat: f64,
    pub verdict: Verdict,
}

impl TriggerDecision {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accept
    }
}

/// Entropy of the candidates' `p_hat` values after clamping negatives to
/// zero and renormalizing. With `normalize` and more than one candidate the
/// result is divided by `ln K`.
pub fn candidate_entropy(cs: &CandidateSet, normalize: bool) -> Result<f64> {
    if cs.is_empty() {
        return Err(Error::EmptyInput("candidate set is empty"));
    }
    let weights: Vec<f64> = cs.entries.iter().map(|e| e.p_hat.max(0.0)).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Precondition("non-finite p_hat".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let h: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let q = w / total;
            -q * q.ln()
        })
        .sum();
    let k = cs.len();
    Ok(if normalize && k > 1 { h / (k as f64).ln() } else { h })
}

fn max_entropy(k: usize, normalize: bool) -> f64 {
    if k <= 1 {
        0.0
    } else if normalize {
        1.0
    } else {
        (k as f64).ln()
    }
}

/// Combines already-computed terms into a decision.
pub fn decide(p_hat: f64, penalty: f64, entropy: f64, cfg: &TriggerConfig) -> TriggerDecision {
    let score = if penalty.is_infinite() {
        f64::NEG_INFINITY
    } else {
        p_hat - cfg.eta * penalty - cfg.alpha * entropy
    };
    let verdict = if score.is_finite() && score >= cfg.theta {
        Verdict::Accept
    } else {
        Verdict::Escalate
    };
    TriggerDecision {
        score,
        entropy,
        penalty,
        p_hat,
        verdict,
    }
}

/// Scores the first entry of `cs`.
pub fn trigger_score(
    cs: &CandidateSet,
    stats: &StatsLibrary,
    cfg: &TriggerConfig,
) -> Result<TriggerDecision> {
    cfg.validate()?;
    let top1 = cs.top1().ok_or(Error::EmptyInput("candidate set is empty"))?;
    let entropy = match candidate_entropy(cs, cfg.normalize_entropy) {
        Ok(h) => h,
        Err(Error::DegenerateDistribution) => max_entropy(cs.len(), cfg.normalize_entropy),
        Err(e) => return Err(e),
    };
    let penalty = stats.uncertainty_penalty(&top1.category_id);
    let decision = decide(top1.p_hat, penalty, entropy, cfg);
    tracing::debug!(
        category = %top1.category_id,
        p_hat = top1.p_hat,
        penalty,
        entropy,
        score = decision.score,
        verdict = ?decision.verdict,
        "trigger decision (entropy over top-{} p_hat)",
        cs.len()
    );
    Ok(decision)
}
