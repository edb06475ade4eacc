//! Self-reflective experience library.
//!
//! Failures observed while classifying the support set are diagnosed by the
//! backend, distilled into short decision rules tagged with the confused
//! category pair, and stored here. At inference the entries whose tags
//! overlap the candidate set are handed to the reasoning prompt.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingVector};
use crate::error::{Error, Result};
use crate::gateway::prompts::{self, candidates_info, render_with, NO_EXPERIENCE};
use crate::gateway::Gateway;
use crate::io;
use crate::prototype::PrototypeLibrary;
use crate::retrieval::CandidateSet;

pub const DEFAULT_CAPACITY: usize = 256;
pub const DEFAULT_E_MAX: usize = 8;
/// Same-tag rules at least this similar are merged by `maintain`.
pub const DEDUP_COSINE: f64 = 0.9;

/// One inference on a support sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub image_ref: Option<String>,
    pub candidates: CandidateSet,
    pub reasoning_path: String,
    pub predicted: String,
    pub ground_truth: String,
}

impl Trajectory {
    pub fn is_failure(&self) -> bool {
        self.predicted != self.ground_truth
    }
}

/// Unordered pair of distinct category ids, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CategoryPair([String; 2]);

impl CategoryPair {
    pub fn new(a: &str, b: &str) -> Result<Self> {
        if a == b {
            return Err(Error::Precondition(format!(
                "experience tags must be two distinct categories, got {a} twice"
            )));
        }
        let (x, y) = if a < b { (a, b) } else { (b, a) };
        Ok(Self([x.to_string(), y.to_string()]))
    }

    pub fn members(&self) -> [&str; 2] {
        [&self.0[0], &self.0[1]]
    }

    pub fn overlap(&self, cs: &CandidateSet) -> usize {
        self.0.iter().filter(|t| cs.contains(t)).count()
    }
}

impl TryFrom<Vec<String>> for CategoryPair {
    type Error = String;

    fn try_from(v: Vec<String>) -> std::result::Result<Self, String> {
        match v.as_slice() {
            [a, b] => CategoryPair::new(a, b).map_err(|e| e.to_string()),
            _ => Err(format!("tags must have exactly 2 members, found {}", v.len())),
        }
    }
}

impl From<CategoryPair> for Vec<String> {
    fn from(p: CategoryPair) -> Self {
        p.0.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceEntry {
    pub entry_id: String,
    pub rule_text: String,
    pub tags: CategoryPair,
    pub usefulness: u64,
    pub created_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_embedding: Option<EmbeddingVector>,
}

/// Output of a reflection, not yet stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DistilledRule {
    pub tags: CategoryPair,
    pub rule_text: String,
    pub diagnosis: String,
    pub rule_embedding: Option<EmbeddingVector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperienceLibrary {
    capacity: usize,
    self_belief: String,
    entries: Vec<ExperienceEntry>,
    #[serde(skip)]
    next_seq: u64,
}

impl PartialEq for ExperienceLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity
            && self.self_belief == other.self_belief
            && self.entries == other.entries
    }
}

impl Default for ExperienceLibrary {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

fn same_rule(a: &str, b: &str) -> bool {
    a.trim() == b.trim()
}

impl ExperienceLibrary {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            self_belief: prompts::INITIAL_SELF_BELIEF.to_string(),
            entries: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ExperienceEntry] {
        &self.entries
    }

    pub fn self_belief(&self) -> &str {
        &self.self_belief
    }

    pub fn get(&self, entry_id: &str) -> Option<&ExperienceEntry> {
        self.entries.iter().find(|e| e.entry_id == entry_id)
    }

    /// Stores a rule and returns its entry id. A rule identical to an
    /// existing one for the same pair is not duplicated; the existing id is
    /// returned instead. Capacity is enforced immediately.
    pub fn insert(
        &mut self,
        tags: CategoryPair,
        rule_text: &str,
        rule_embedding: Option<EmbeddingVector>,
    ) -> Result<String> {
        let rule_text = rule_text.trim();
        if rule_text.is_empty() {
            return Err(Error::EmptyRule);
        }
        if let Some(existing) = self
            .entries
            .iter()
            .find(|e| e.tags == tags && same_rule(&e.rule_text, rule_text))
        {
            return Ok(existing.entry_id.clone());
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let entry_id = format!("exp-{seq:06}");
        self.entries.push(ExperienceEntry {
            entry_id: entry_id.clone(),
            rule_text: rule_text.to_string(),
            tags,
            usefulness: 0,
            created_seq: seq,
            rule_embedding,
        });
        self.enforce_capacity();
        Ok(entry_id)
    }

    pub fn insert_rule(&mut self, rule: &DistilledRule) -> Result<String> {
        self.insert(rule.tags.clone(), &rule.rule_text, rule.rule_embedding.clone())
    }

    /// Adds one to the usefulness of each listed entry.
    pub fn credit<'a>(&mut self, entry_ids: impl IntoIterator<Item = &'a str>) {
        let ids: HashSet<&str> = entry_ids.into_iter().collect();
        for e in &mut self.entries {
            if ids.contains(e.entry_id.as_str()) {
                e.usefulness += 1;
            }
        }
    }

    /// Entries sharing at least one tag with the candidates, ordered by
    /// overlap, then usefulness, then recency; at most `e_max`.
    pub fn retrieve_experience(&self, cs: &CandidateSet, e_max: usize) -> Vec<&ExperienceEntry> {
        let mut scored: Vec<(usize, &ExperienceEntry)> = self
            .entries
            .iter()
            .map(|e| (e.tags.overlap(cs), e))
            .filter(|(overlap, _)| *overlap > 0)
            .collect();
        scored.sort_by(|(oa, a), (ob, b)| {
            ob.cmp(oa)
                .then(b.usefulness.cmp(&a.usefulness))
                .then(b.created_seq.cmp(&a.created_seq))
        });
        scored.into_iter().take(e_max).map(|(_, e)| e).collect()
    }

    /// Merges near-duplicate rules within each tag pair, then evicts the
    /// least useful (oldest first on ties) until within capacity.
    ///
    /// Two same-pair entries are duplicates when their rule embeddings have
    /// cosine >= 0.9, or when their rule texts are identical. The survivor is
    /// the more useful entry (newer on ties) and absorbs the other's
    /// usefulness.
    pub fn maintain(&mut self) {
        let before = self.entries.len();
        let mut order: Vec<ExperienceEntry> = std::mem::take(&mut self.entries);
        order.sort_by(|a, b| {
            b.usefulness
                .cmp(&a.usefulness)
                .then(b.created_seq.cmp(&a.created_seq))
        });
        let mut kept: Vec<ExperienceEntry> = Vec::with_capacity(order.len());
        for entry in order {
            let dup = kept.iter_mut().find(|k| {
                k.tags == entry.tags
                    && (same_rule(&k.rule_text, &entry.rule_text)
                        || match (&k.rule_embedding, &entry.rule_embedding) {
                            (Some(a), Some(b)) => cosine_similarity(a, b)
                                .map(|c| c >= DEDUP_COSINE)
                                .unwrap_or(false),
                            _ => false,
                        })
            });
            match dup {
                Some(survivor) => survivor.usefulness += entry.usefulness,
                None => kept.push(entry),
            }
        }
        kept.sort_by_key(|e| e.created_seq);
        self.entries = kept;
        let merged = before - self.entries.len();
        let evicted = self.enforce_capacity();
        if merged > 0 || evicted > 0 {
            tracing::debug!(merged, evicted, remaining = self.entries.len(), "experience maintenance");
        }
    }

    fn enforce_capacity(&mut self) -> usize {
        let mut evicted = 0;
        while self.entries.len() > self.capacity {
            let victim = self
                .entries
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    a.usefulness
                        .cmp(&b.usefulness)
                        .then(a.created_seq.cmp(&b.created_seq))
                })
                .map(|(i, _)| i)
                .expect("over capacity implies nonempty");
            self.entries.remove(victim);
            evicted += 1;
        }
        evicted
    }

    /// Asks the backend to fold `new_rule` into the self-belief strategy.
    /// On any failure the current strategy is left untouched.
    pub fn update_self_belief(&mut self, new_rule: &str, gateway: &Gateway) -> Result<&str> {
        if new_rule.trim().is_empty() {
            return Err(Error::Precondition("new rule is blank".into()));
        }
        let prompt = render_with(
            &gateway.templates.step4_update,
            &[
                ("current_self_belief", &self.self_belief),
                ("failure_analysis", new_rule.trim()),
            ],
        )?;
        let response = gateway.ask(prompt, &[])?;
        let response = response.trim();
        if response.is_empty() {
            return Err(Error::EmptyResponse("self-belief update"));
        }
        self.self_belief = response.to_string();
        Ok(&self.self_belief)
    }

    pub fn set_self_belief(&mut self, text: impl Into<String>) {
        self.self_belief = text.into();
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut lib: ExperienceLibrary = io::read_json(path)?;
        let origin = path.display().to_string();
        if lib.capacity == 0 {
            return Err(Error::format(origin, "capacity must be positive"));
        }
        if lib.entries.len() > lib.capacity {
            return Err(Error::format(
                origin,
                format!("{} entries exceed capacity {}", lib.entries.len(), lib.capacity),
            ));
        }
        let mut ids = HashSet::new();
        let mut rules = HashSet::new();
        for (i, e) in lib.entries.iter().enumerate() {
            if !ids.insert(e.entry_id.as_str()) {
                return Err(Error::format(
                    format!("{origin}: entries[{i}].entry_id"),
                    format!("duplicate entry_id {}", e.entry_id),
                ));
            }
            if !rules.insert((e.tags.clone(), e.rule_text.trim())) {
                return Err(Error::format(
                    format!("{origin}: entries[{i}]"),
                    "duplicate rule for the same category pair",
                ));
            }
        }
        lib.next_seq = lib
            .entries
            .iter()
            .map(|e| e.created_seq + 1)
            .max()
            .unwrap_or(0);
        Ok(lib)
    }
}

fn display_name<'a>(protos: &'a PrototypeLibrary, id: &'a str) -> &'a str {
    protos.get(id).map(|r| r.display_name.as_str()).unwrap_or(id)
}

/// Numbered rule list for the reasoning prompt, or the fixed "no
/// experience" line when `entries` is empty.
pub fn render_experience_context(entries: &[&ExperienceEntry], protos: &PrototypeLibrary) -> String {
    if entries.is_empty() {
        return NO_EXPERIENCE.to_string();
    }
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let [a, b] = e.tags.members();
            format!(
                "{}. [{} vs. {}] {}",
                i + 1,
                display_name(protos, a),
                display_name(protos, b),
                e.rule_text
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Diagnoses a failed trajectory and abstracts the diagnosis into a rule
/// tagged with the (true, predicted) pair.
pub fn reflect_on_failure(
    t: &Trajectory,
    protos: &PrototypeLibrary,
    gateway: &Gateway,
) -> Result<DistilledRule> {
    if !t.is_failure() {
        return Err(Error::Precondition(
            "reflection requires a misclassified trajectory".into(),
        ));
    }
    if t.ground_truth.trim().is_empty() {
        return Err(Error::Precondition("trajectory has no ground truth".into()));
    }
    let tags = CategoryPair::new(&t.ground_truth, &t.predicted)?;
    let description = |id: &str| {
        protos
            .get(id)
            .map(|r| r.description.clone())
            .unwrap_or_else(|| "(no description available)".into())
    };
    let true_name = display_name(protos, &t.ground_truth);
    let pred_name = display_name(protos, &t.predicted);
    let images: Vec<String> = t.image_ref.iter().cloned().collect();

    let diagnosis_prompt = render_with(
        &gateway.templates.step2_diagnosis,
        &[
            ("predicted_category", pred_name),
            ("true_category", true_name),
            ("model_reasoning", &t.reasoning_path),
            ("candidates_info", &candidates_info(&t.candidates)),
            ("correct_category_desc", &description(&t.ground_truth)),
            ("predicted_category_desc", &description(&t.predicted)),
        ],
    )?;
    let diagnosis = gateway.ask(diagnosis_prompt, &images)?;

    let abstraction_prompt = render_with(
        &gateway.templates.step3_abstraction,
        &[
            ("true_category", true_name),
            ("predicted_category", pred_name),
            ("step2_diagnosis_output", diagnosis.trim()),
        ],
    )?;
    let rule = gateway.ask(abstraction_prompt, &[])?;
    let rule_text = rule.trim();
    if rule_text.is_empty() {
        return Err(Error::EmptyRule);
    }
    let words = rule_text.split_whitespace().count();
    if words > 30 {
        tracing::debug!(words, "distilled rule exceeds the 30-word target");
    }
    Ok(DistilledRule {
        tags,
        rule_text: rule_text.to_string(),
        diagnosis: diagnosis.trim().to_string(),
        rule_embedding: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Backend, BackendError, GenerationRequest, MockBackend, MockRules};
    use crate::prototype::CategoryRecord;
    use crate::retrieval::CandidateScore;
    use std::sync::Arc;

    fn pair(a: &str, b: &str) -> CategoryPair {
        CategoryPair::new(a, b).unwrap()
    }

    fn cands(ids: &[&str]) -> CandidateSet {
        CandidateSet {
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| CandidateScore {
                    category_id: id.to_string(),
                    display_name: id.to_string(),
                    sim_visual: 0.0,
                    sim_textual: 0.0,
                    rank_visual: i + 1,
                    rank_textual: i + 1,
                    p_fuse: 0.5,
                    rrf: 0.03,
                    p_hat: 0.5,
                })
                .collect(),
            k_requested: ids.len(),
        }
    }

    fn emb(v: &[f32]) -> Option<EmbeddingVector> {
        Some(EmbeddingVector::unit(v.to_vec()).unwrap())
    }

    fn dog_library() -> PrototypeLibrary {
        let v = EmbeddingVector::unit(vec![1.0, 0.0]).unwrap();
        let rec = |id: &str, name: &str, desc: &str| CategoryRecord {
            category_id: id.into(),
            display_name: name.into(),
            description: desc.into(),
            visual_prototype: v.clone(),
            textual_prototype: v.clone(),
        };
        PrototypeLibrary::from_records(vec![
            rec("rottweiler", "Rottweiler", "Black and tan with small triangular ears."),
            rec("coonhound", "Black-and-tan Coonhound", "Long, low-set pendulous ears."),
        ])
        .unwrap()
    }

    fn failure() -> Trajectory {
        Trajectory {
            image_ref: Some("img_17.jpg".into()),
            candidates: cands(&["rottweiler", "coonhound"]),
            reasoning_path: "Black and tan coat suggests Rottweiler.".into(),
            predicted: "rottweiler".into(),
            ground_truth: "coonhound".into(),
        }
    }

    fn gateway(rules: MockRules) -> (Gateway, Arc<MockBackend>) {
        let mock = Arc::new(MockBackend::new(rules));
        (Gateway::new(mock.clone()), mock)
    }

    #[test]
    fn reflection_tags_the_confused_pair() {
        let (gw, mock) = gateway(
            MockRules::default()
                .rule(
                    "Analyze this specific failure case",
                    "Visual Evidence: long drooping ears. Direct Cause: coat color.",
                )
                .rule(
                    "You are a knowledge engineer",
                    "  Prioritize ear shape over coat color: Coonhounds have long pendulous ears.  ",
                ),
        );
        let rule = reflect_on_failure(&failure(), &dog_library(), &gw).unwrap();
        assert_eq!(rule.tags, pair("coonhound", "rottweiler"));
        assert!(rule.rule_text.contains("ears"));
        assert!(!rule.rule_text.starts_with(' '));
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn reflection_prompts_carry_context() {
        struct Recorder(std::sync::Mutex<Vec<GenerationRequest>>);
        impl Backend for Recorder {
            fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
                self.0.lock().unwrap().push(req.clone());
                Ok("check tail curvature".into())
            }
        }
        let rec = Arc::new(Recorder(Default::default()));
        let gw = Gateway::new(rec.clone());
        let rule = reflect_on_failure(&failure(), &dog_library(), &gw).unwrap();
        assert_eq!(rule.rule_text, "check tail curvature");
        let calls = rec.0.lock().unwrap();
        let step2 = &calls[0];
        assert!(step2.prompt_text.contains(
            "incorrectly predicted 'Rottweiler' but the correct answer is 'Black-and-tan Coonhound'"
        ));
        assert!(step2.prompt_text.contains("Long, low-set pendulous ears."));
        assert!(step2.prompt_text.contains("Black and tan with small triangular ears."));
        assert!(step2.prompt_text.contains("Black and tan coat suggests Rottweiler."));
        assert_eq!(step2.image_refs, ["img_17.jpg"]);
        assert!(calls[1]
            .prompt_text
            .contains("Conflict: Black-and-tan Coonhound vs. Rottweiler"));
        assert!(calls[1].prompt_text.contains("Diagnosis: check tail curvature"));
    }

    #[test]
    fn reflection_requires_failure() {
        let (gw, mock) = gateway(MockRules::with_default("rule"));
        let mut t = failure();
        t.predicted = t.ground_truth.clone();
        assert!(matches!(
            reflect_on_failure(&t, &dog_library(), &gw),
            Err(Error::Precondition(_))
        ));
        assert_eq!(mock.calls(), 0);
    }

    #[test]
    fn blank_rule_is_an_error() {
        let (gw, _) = gateway(
            MockRules::default()
                .rule("Analyze this specific failure case", "diagnosis")
                .rule("You are a knowledge engineer", "   "),
        );
        assert!(matches!(
            reflect_on_failure(&failure(), &dog_library(), &gw),
            Err(Error::EmptyRule)
        ));
    }

    #[test]
    fn self_belief_updates() {
        let mut lib = ExperienceLibrary::default();
        assert_eq!(lib.self_belief(), prompts::INITIAL_SELF_BELIEF);
        let (gw, _) = gateway(MockRules::with_default("1. Observe. 2. Check the ears first."));
        lib.update_self_belief("Prioritize ears over coat.", &gw).unwrap();
        assert_eq!(lib.self_belief(), "1. Observe. 2. Check the ears first.");
        assert!(matches!(
            lib.update_self_belief("  ", &gw),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn self_belief_survives_backend_failure() {
        struct TimesOut;
        impl Backend for TimesOut {
            fn generate(&self, _: &GenerationRequest) -> Result<String, BackendError> {
                Err(BackendError::Timeout {
                    request_id: "t-1".into(),
                })
            }
        }
        let mut lib = ExperienceLibrary::default();
        let gw = Gateway::new(Arc::new(TimesOut));
        let err = lib.update_self_belief("rule", &gw).unwrap_err();
        assert!(matches!(err, Error::Backend(BackendError::Timeout { .. })));
        assert_eq!(lib.self_belief(), prompts::INITIAL_SELF_BELIEF);
    }

    #[test]
    fn retrieval_ordering() {
        let mut lib = ExperienceLibrary::default();
        let one = lib.insert(pair("a", "x"), "one tag", None).unwrap();
        let two = lib.insert(pair("a", "b"), "two tags", None).unwrap();
        lib.insert(pair("x", "y"), "no tags", None).unwrap();
        let got: Vec<&str> = lib
            .retrieve_experience(&cands(&["a", "b", "c"]), 8)
            .iter()
            .map(|e| e.entry_id.as_str())
            .collect();
        assert_eq!(got, [two.as_str(), one.as_str()]);
        assert!(lib.retrieve_experience(&cands(&["q", "r"]), 8).is_empty());
    }

    #[test]
    fn retrieval_caps_at_e_max_and_prefers_useful() {
        let mut lib = ExperienceLibrary::default();
        let mut ids = Vec::new();
        for i in 0..12 {
            ids.push(lib.insert(pair("a", &format!("z{i}")), &format!("rule {i}"), None).unwrap());
        }
        lib.credit([ids[0].as_str()]);
        lib.credit([ids[0].as_str()]);
        lib.credit([ids[1].as_str()]);
        let got = lib.retrieve_experience(&cands(&["a"]), DEFAULT_E_MAX);
        assert_eq!(got.len(), 8);
        assert_eq!(got[0].entry_id, ids[0]);
        assert_eq!(got[1].entry_id, ids[1]);
        // Remaining ties fall back to newest first.
        assert_eq!(got[2].entry_id, ids[11]);
    }

    #[test]
    fn dedup_merges_usefulness() {
        let mut lib = ExperienceLibrary::default();
        let a = lib.insert(pair("a", "b"), "check the ears", emb(&[1.0, 0.0])).unwrap();
        // cosine([1,0], [0.95, sqrt(1-0.95^2)]) = 0.95
        let b = lib
            .insert(pair("a", "b"), "look at ear shape", emb(&[0.95, (1.0f32 - 0.9025).sqrt()]))
            .unwrap();
        for _ in 0..3 {
            lib.credit([a.as_str()]);
        }
        lib.credit([b.as_str()]);
        lib.maintain();
        assert_eq!(lib.len(), 1);
        assert_eq!(lib.entries()[0].entry_id, a);
        assert_eq!(lib.entries()[0].usefulness, 4);
    }

    #[test]
    fn dedup_tie_keeps_newer() {
        let mut lib = ExperienceLibrary::default();
        lib.insert(pair("a", "b"), "old", emb(&[1.0, 0.0])).unwrap();
        let newer = lib.insert(pair("a", "b"), "new", emb(&[1.0, 0.01])).unwrap();
        lib.maintain();
        assert_eq!(lib.len(), 1);
        assert_eq!(lib.entries()[0].entry_id, newer);
    }

    #[test]
    fn dedup_is_scoped_to_tag_pair() {
        let mut lib = ExperienceLibrary::default();
        lib.insert(pair("a", "b"), "check the ears", emb(&[1.0, 0.0])).unwrap();
        lib.insert(pair("a", "c"), "check the ear", emb(&[0.95, 0.312])).unwrap();
        lib.maintain();
        assert_eq!(lib.len(), 2);
    }

    #[test]
    fn capacity_evicts_least_useful() {
        let mut lib = ExperienceLibrary::new(256);
        let mut ids = Vec::new();
        for i in 0..256 {
            let id = lib.insert(pair("a", &format!("b{i}")), "rule", None).unwrap();
            lib.credit([id.as_str()]);
            ids.push(id);
        }
        // Make one old entry the least useful one by leaving it at zero.
        lib.entries.iter_mut().find(|e| e.entry_id == ids[100]).unwrap().usefulness = 0;
        lib.credit([]);
        let extra = lib.insert(pair("q", "r"), "late rule", None).unwrap();
        // The new entry (usefulness 0, newest) outlives the old zero entry.
        assert_eq!(lib.len(), 256);
        assert!(lib.get(&ids[100]).is_none());
        assert!(lib.get(&extra).is_some());
        lib.maintain();
        assert_eq!(lib.len(), 256);
    }

    #[test]
    fn identical_rules_are_not_duplicated() {
        let mut lib = ExperienceLibrary::default();
        let a = lib.insert(pair("a", "b"), "rule", None).unwrap();
        let b = lib.insert(pair("b", "a"), " rule ", None).unwrap();
        assert_eq!(a, b);
        assert_eq!(lib.len(), 1);
        assert!(CategoryPair::new("a", "a").is_err());
    }

    #[test]
    fn persistence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("experience.json");
        let mut lib = ExperienceLibrary::new(16);
        let id = lib.insert(pair("a", "b"), "rule one", emb(&[0.6, 0.8])).unwrap();
        lib.insert(pair("c", "b"), "rule two", None).unwrap();
        lib.credit([id.as_str()]);
        lib.set_self_belief("strategy v2");
        lib.save(&path).unwrap();
        let mut back = ExperienceLibrary::load(&path).unwrap();
        assert_eq!(back, lib);
        let next = back.insert(pair("a", "c"), "rule three", None).unwrap();
        assert!(back.get(&next).unwrap().created_seq > 1);

        std::fs::write(
            &path,
            r#"{"capacity": 4, "self_belief": "s", "entries": [
                {"entry_id": "e1", "rule_text": "r1", "tags": ["a", "b"], "usefulness": 0, "created_seq": 0},
                {"entry_id": "e1", "rule_text": "r2", "tags": ["a", "c"], "usefulness": 0, "created_seq": 1}
            ]}"#,
        )
        .unwrap();
        assert!(matches!(ExperienceLibrary::load(&path), Err(Error::Format { .. })));

        std::fs::write(
            &path,
            r#"{"capacity": 4, "self_belief": "s", "entries": [
                {"entry_id": "e1", "rule_text": "r1", "tags": ["a", "a"], "usefulness": 0, "created_seq": 0}
            ]}"#,
        )
        .unwrap();
        assert!(matches!(ExperienceLibrary::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn context_rendering() {
        let protos = dog_library();
        assert_eq!(render_experience_context(&[], &protos), NO_EXPERIENCE);
        let mut lib = ExperienceLibrary::default();
        lib.insert(pair("rottweiler", "coonhound"), "Check ear length.", None).unwrap();
        let entries = lib.retrieve_experience(&cands(&["coonhound"]), 8);
        assert_eq!(
            render_experience_context(&entries, &protos),
            "1. [Black-and-tan Coonhound vs. Rottweiler] Check ear length."
        );
    }
}
