//! The three knowledge bases and their offline construction.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::dataset::{CategorySpec, EmbeddingStore, ManifestEntry, SampleRecord};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::experience::{reflect_on_failure, ExperienceLibrary, Trajectory};
use crate::gateway::prompts::{candidate_text, render_with};
use crate::gateway::{parse_prediction, Gateway, ParsedPrediction};
use crate::prototype::{build_category_record, PrototypeLibrary};
use crate::retrieval::retrieve;
use crate::stats::StatsLibrary;

pub const PROTOTYPES_FILE: &str = "prototypes.json";
pub const STATS_FILE: &str = "stats.json";
pub const EXPERIENCE_FILE: &str = "experience.json";

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub prototypes: PrototypeLibrary,
    pub stats: StatsLibrary,
    pub experience: ExperienceLibrary,
}

impl KnowledgeBase {
    pub fn dim(&self) -> usize {
        self.prototypes.dim()
    }

    /// Loads the three files from `dir` and checks they agree.
    pub fn load(dir: &Path) -> Result<Self> {
        let prototypes = PrototypeLibrary::load(&dir.join(PROTOTYPES_FILE))?;
        let stats = StatsLibrary::load(&dir.join(STATS_FILE))?;
        let experience = ExperienceLibrary::load(&dir.join(EXPERIENCE_FILE))?;
        if let Some((id, _)) = stats.categories().find(|(id, _)| prototypes.get(id).is_none()) {
            return Err(Error::format(
                dir.join(STATS_FILE).display().to_string(),
                format!("category {id} is not in the prototype library"),
            ));
        }
        Ok(Self {
            prototypes,
            stats,
            experience,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.prototypes.save(&dir.join(PROTOTYPES_FILE))?;
        self.stats.save(&dir.join(STATS_FILE))?;
        self.experience.save(&dir.join(EXPERIENCE_FILE))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub categories: usize,
    pub support_samples: usize,
    /// Support samples dropped because their category already had `k_shot`.
    pub skipped_samples: usize,
    pub retrieval_correct: u64,
    pub step1_correct: usize,
    pub reflections: usize,
    pub experience_entries: usize,
}

/// Picks up to `k_shot` support samples per category, in manifest order,
/// after checking labels, coverage, and separation from the test ids.
pub fn select_support<'a>(
    support: &'a [SampleRecord],
    categories: &[CategorySpec],
    k_shot: usize,
    test_ids: Option<&HashSet<String>>,
) -> Result<(Vec<&'a SampleRecord>, usize)> {
    if let Some(test_ids) = test_ids {
        let mut shared: Vec<&str> = support
            .iter()
            .map(|s| s.sample_id.as_str())
            .filter(|id| test_ids.contains(*id))
            .collect();
        if !shared.is_empty() {
            shared.sort_unstable();
            shared.truncate(5);
            return Err(Error::SupportTestOverlap(shared.join(", ")));
        }
    }
    let known: HashSet<&str> = categories.iter().map(|c| c.category_id.as_str()).collect();
    let mut per_cat: BTreeMap<&str, usize> = BTreeMap::new();
    let mut chosen = Vec::new();
    let mut skipped = 0;
    for s in support {
        let label = s
            .label
            .as_deref()
            .ok_or_else(|| Error::format(format!("sample {}", s.sample_id), "support sample has no label"))?;
        if !known.contains(label) {
            return Err(Error::UnknownCategory(label.to_string()));
        }
        let count = per_cat.entry(label).or_default();
        if *count < k_shot {
            *count += 1;
            chosen.push(s);
        } else {
            skipped += 1;
        }
    }
    if let Some(c) = categories.iter().find(|c| !per_cat.contains_key(c.category_id.as_str())) {
        return Err(Error::MissingCategorySupport(c.category_id.clone()));
    }
    Ok((chosen, skipped))
}

/// Builds the prototype, statistics, and experience libraries from a
/// labeled support set. Nothing is written; the caller persists the result
/// only if every step succeeded.
///
/// Each category needs a description and a description embedding in
/// `texts` (see [`generate_descriptions`]).
pub fn build_knowledge_bases(
    support: &[SampleRecord],
    categories: &[CategorySpec],
    texts: &EmbeddingStore,
    gateway: &Gateway,
    cfg: &EngineConfig,
    test_ids: Option<&HashSet<String>>,
) -> Result<(KnowledgeBase, BuildSummary)> {
    cfg.validate()?;
    let (chosen, skipped) = select_support(support, categories, cfg.k_shot, test_ids)?;
    let mut summary = BuildSummary {
        categories: categories.len(),
        support_samples: chosen.len(),
        skipped_samples: skipped,
        ..Default::default()
    };

    let prototypes = build_prototypes(&chosen, categories, texts)?;
    tracing::info!(categories = prototypes.len(), dim = prototypes.dim(), "prototypes built");

    let mut stats = StatsLibrary::with_categories(categories.iter().map(|c| c.category_id.as_str()));
    for s in &chosen {
        let cs = retrieve(&s.embedding, &prototypes, &cfg.fusion, 1)?;
        let top1 = &cs.entries[0].category_id;
        stats.record_retrieval(top1, Some(top1) == s.label.as_ref());
    }
    summary.retrieval_correct = stats.categories().map(|(_, c)| c.correct_c).sum();
    tracing::info!(total_n = stats.total_n(), correct = summary.retrieval_correct, "retrieval statistics collected");

    let mut experience = ExperienceLibrary::new(cfg.experience_capacity);
    for s in &chosen {
        let label = s.label.clone().expect("checked by select_support");
        let cs = retrieve(&s.embedding, &prototypes, &cfg.fusion, cfg.k_candidates)?;
        let prompt = render_with(
            &gateway.templates.step1_self_belief,
            &[
                ("current_self_belief", experience.self_belief()),
                ("candidate_text", &candidate_text(&cs)),
            ],
        )?;
        let images: Vec<String> = s.image_ref.iter().cloned().collect();
        let response = gateway.ask(prompt, &images)?;
        let predicted = match parse_prediction(&response, &cs) {
            ParsedPrediction::Category(id) => id,
            ParsedPrediction::NoMatch => cs.entries[0].category_id.clone(),
        };
        if predicted == label {
            summary.step1_correct += 1;
            let useful: Vec<String> = experience
                .retrieve_experience(&cs, cfg.e_max)
                .iter()
                .map(|e| e.entry_id.clone())
                .collect();
            experience.credit(useful.iter().map(String::as_str));
            continue;
        }
        let trajectory = Trajectory {
            image_ref: s.image_ref.clone(),
            candidates: cs,
            reasoning_path: response,
            predicted,
            ground_truth: label,
        };
        let rule = reflect_on_failure(&trajectory, &prototypes, gateway)?;
        summary.reflections += 1;
        experience.insert_rule(&rule)?;
        experience.update_self_belief(&rule.rule_text, gateway)?;
        experience.maintain();
    }
    summary.experience_entries = experience.len();
    tracing::info!(
        step1_correct = summary.step1_correct,
        reflections = summary.reflections,
        entries = summary.experience_entries,
        "experience library built"
    );

    Ok((
        KnowledgeBase {
            prototypes,
            stats,
            experience,
        },
        summary,
    ))
}

fn build_prototypes(
    chosen: &[&SampleRecord],
    categories: &[CategorySpec],
    texts: &EmbeddingStore,
) -> Result<PrototypeLibrary> {
    let mut records = Vec::with_capacity(categories.len());
    for c in categories {
        let support: Vec<EmbeddingVector> = chosen
            .iter()
            .filter(|s| s.label.as_deref() == Some(c.category_id.as_str()))
            .map(|s| s.embedding.clone())
            .collect();
        let description = c.description.as_deref().filter(|d| !d.trim().is_empty()).ok_or_else(|| {
            Error::Precondition(format!(
                "category {} has no description; generate descriptions first",
                c.category_id
            ))
        })?;
        let key = c.description_key();
        let desc_emb = texts.get(&key).ok_or_else(|| {
            Error::Precondition(format!(
                "no description embedding {key} for category {}",
                c.category_id
            ))
        })?;
        records.push(build_category_record(
            &c.category_id,
            &c.display_name,
            &support,
            description,
            desc_emb,
        )?);
    }
    PrototypeLibrary::from_records(records)
}

/// Generates a description for every category that lacks one, showing the
/// backend that category's support images. Returns the updated list.
pub fn generate_descriptions(
    categories: &[CategorySpec],
    support: &[ManifestEntry],
    gateway: &Gateway,
    overwrite: bool,
) -> Result<Vec<CategorySpec>> {
    let mut out = categories.to_vec();
    for c in &mut out {
        if !overwrite && c.description.as_deref().is_some_and(|d| !d.trim().is_empty()) {
            continue;
        }
        let images: Vec<String> = support
            .iter()
            .filter(|s| s.label.as_deref() == Some(c.category_id.as_str()))
            .filter_map(|s| s.image_ref.clone())
            .collect();
        let prompt = render_with(
            &gateway.templates.textual_prototype,
            &[("category_name", &c.display_name)],
        )?;
        let text = gateway.ask(prompt, &images)?;
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::EmptyResponse("category description"));
        }
        c.description = Some(text.to_string());
    }
    Ok(out)
}
