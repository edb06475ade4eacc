//! Fast retrieval over the prototype library.
//!
//! Each category is scored against both prototype sets. Per-modality
//! similarities become temperature-scaled softmax distributions that are
//! linearly fused; a reciprocal-rank term rewards agreement between the two
//! modality rankings:
//!
//! ```text
//! p_fuse(c) = lambda * p_img(c) + (1 - lambda) * p_text(c)
//! rrf(c)    = 1 / (kappa + r_v(c)) + 1 / (kappa + r_t(c))
//! p_hat(c)  = p_fuse(c) + beta * rrf(c)
//! ```

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, EmbeddingVector};
use crate::error::{Error, Result};
use crate::prototype::PrototypeLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Weight of the visual distribution in the linear fusion.
    pub lambda: f64,
    /// RRF smoothing constant.
    pub kappa: f64,
    /// Weight of the RRF term in the final confidence.
    pub beta: f64,
    /// Softmax temperature applied to cosine similarities.
    pub temperature: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            kappa: 60.0,
            beta: 0.1,
            temperature: 0.01,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda {} not in [0, 1]", self.lambda)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidConfig(format!("kappa {} must be positive", self.kappa)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("beta {} must be nonnegative", self.beta)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub category_id: String,
    pub display_name: String,
    pub sim_visual: f64,
    pub sim_textual: f64,
    pub rank_visual: usize,
    pub rank_textual: usize,
    pub p_fuse: f64,
    pub rrf: f64,
    pub p_hat: f64,
}

/// Top-k candidates sorted by descending `p_hat`, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entries: Vec<CandidateScore>,
    pub k_requested: usize,
}

impl CandidateSet {
    pub fn top1(&self) -> Option<&CandidateScore> {
        self.entries.first()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, category_id: &str) -> bool {
        self.entries.iter().any(|e| e.category_id == category_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.category_id.as_str())
    }
}

/// Numerically stable softmax of `scores / temperature`.
pub fn softmax_temperature(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("softmax over no scores"));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn fuse_probabilities(p_img: &[f64], p_text: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if p_img.len() != p_text.len() {
        return Err(Error::DimMismatch {
            expected: p_img.len(),
            found: p_text.len(),
        });
    }
    Ok(p_img
        .iter()
        .zip(p_text)
        .map(|(&i, &t)| lambda * i + (1.0 - lambda) * t)
        .collect())
}

pub fn rrf_score(rank_visual: usize, rank_textual: usize, kappa: f64) -> Result<f64> {
    for r in [rank_visual, rank_textual] {
        if r < 1 {
            return Err(Error::InvalidRank(r));
        }
    }
    Ok(1.0 / (kappa + rank_visual as f64) + 1.0 / (kappa + rank_textual as f64))
}

/// 1-based ranks by descending score; equal scores are ordered by the
/// tie-break key so every rank is distinct.
fn ranks_by_score(scores: &[f64], ids: &[&str]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| desc_then_id(scores[a], scores[b], ids[a], ids[b]));
    let mut ranks = vec![0; scores.len()];
    for (pos, idx) in order.into_iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    ranks
}

fn desc_then_id(sa: f64, sb: f64, ida: &str, idb: &str) -> Ordering {
    sb.partial_cmp(&sa)
        .unwrap_or(Ordering::Equal)
        .then_with(|| ida.cmp(idb))
}

/// Scores every category in `lib` against `query` and returns the top `k`
/// by fused confidence. Softmax and ranks are computed over the whole
/// library. The query is normalized internally, so any positive rescaling
/// gives the same result.
pub fn retrieve(
    query: &EmbeddingVector,
    lib: &PrototypeLibrary,
    cfg: &FusionConfig,
    k: usize,
) -> Result<CandidateSet> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if lib.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    if query.dim() != lib.dim() {
        return Err(Error::DimMismatch {
            expected: lib.dim(),
            found: query.dim(),
        });
    }
    let q_norm = query.norm();
    if q_norm == 0.0 {
        return Err(Error::ZeroVector);
    }

    let records = lib.records();
    let ids: Vec<&str> = records.iter().map(|r| r.category_id.as_str()).collect();
    let mut sim_v = Vec::with_capacity(records.len());
    let mut sim_t = Vec::with_capacity(records.len());
    for r in records {
        sim_v.push(dot(query, &r.visual_prototype)? / q_norm);
        sim_t.push(dot(query, &r.textual_prototype)? / q_norm);
    }

    let rank_v = ranks_by_score(&sim_v, &ids);
    let rank_t = ranks_by_score(&sim_t, &ids);
    let p_img = softmax_temperature(&sim_v, cfg.temperature)?;
    let p_text = softmax_temperature(&sim_t, cfg.temperature)?;
    let p_fuse = fuse_probabilities(&p_img, &p_text, cfg.lambda)?;

    let mut entries = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let rrf = rrf_score(rank_v[i], rank_t[i], cfg.kappa)?;
        entries.push(CandidateScore {
            category_id: r.category_id.clone(),
            display_name: r.display_name.clone(),
            sim_visual: sim_v[i],
            sim_textual: sim_t[i],
            rank_visual: rank_v[i],
            rank_textual: rank_t[i],
            p_fuse: p_fuse[i],
            rrf,
            p_hat: p_fuse[i] + cfg.beta * rrf,
        });
    }
    entries.sort_by(|a, b| desc_then_id(a.p_hat, b.p_hat, &a.category_id, &b.category_id));
    entries.truncate(k);
    Ok(CandidateSet {
        entries,
        k_requested: k,
    })
}
