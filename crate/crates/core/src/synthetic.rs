//! Seeded synthetic datasets with controllable category overlap, plus a
//! mock-backend rules file that answers like an oracle.
//!
//! Category centers interpolate between a private random direction and one
//! direction shared by all categories; `overlap` is the weight of the shared
//! part, so 0 gives well separated clusters and values near 1 make the
//! categories nearly indistinguishable.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    description_key, resolve_samples, save_categories, CategorySpec, EmbeddingStore,
    ManifestEntry, SampleRecord,
};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::gateway::prompts::INITIAL_SELF_BELIEF;
use crate::gateway::MockRules;
use crate::io;

pub const SUPPORT_FILE: &str = "support.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const CATEGORIES_FILE: &str = "categories.json";
pub const MOCK_RULES_FILE: &str = "mock_rules.json";

pub const MOCK_DIAGNOSIS: &str =
    "Visual Evidence: the fine part pattern disagrees with the prediction.\nDirect Cause: the overall color is shared by both categories.";
pub const MOCK_RULE: &str = "Compare fine part patterns before relying on overall color.";
pub const MOCK_DESCRIPTION: &str = "A synthetic category with a characteristic part pattern.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_categories: usize,
    pub dim: usize,
    pub k_shot: usize,
    pub test_per_category: usize,
    /// Weight of the shared direction in every category center, in [0, 1).
    pub overlap: f64,
    /// Expected norm of the noise added to each image embedding.
    pub noise: f64,
    /// Expected norm of the noise added to each description embedding.
    pub text_noise: f64,
    /// Fraction of support images the mock misnames during construction.
    pub support_error_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_categories: 20,
            dim: 32,
            k_shot: 3,
            test_per_category: 10,
            overlap: 0.0,
            noise: 1.0,
            text_noise: 0.3,
            support_error_rate: 0.3,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_categories < 2 || self.dim < 2 || self.k_shot == 0 {
            return Err(Error::InvalidConfig(
                "need at least 2 categories, dimension 2, and 1 support sample".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidConfig(format!("overlap {} not in [0, 1)", self.overlap)));
        }
        if !(self.noise >= 0.0 && self.text_noise >= 0.0) {
            return Err(Error::InvalidConfig("noise levels must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.support_error_rate) {
            return Err(Error::InvalidConfig("support_error_rate not in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub categories: Vec<CategorySpec>,
    pub support: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    pub embeddings: EmbeddingStore,
    pub mock_rules: MockRules,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// `center` plus isotropic noise of expected norm `scale`, normalized.
fn jitter(rng: &mut ChaCha8Rng, center: &[f64], scale: f64) -> Result<EmbeddingVector> {
    let g = gaussian(rng, center.len());
    let s = scale / (center.len() as f64).sqrt();
    let v: Vec<f64> = center.iter().zip(&g).map(|(c, n)| c + s * n).collect();
    EmbeddingVector::from_f64(&unit(&v))
}

pub fn display_name(i: usize) -> String {
    format!("Species {:02}", i + 1)
}

pub fn category_id(i: usize) -> String {
    format!("c{:02}", i + 1)
}

fn oracle_answer(name: &str) -> String {
    format!("Reasoning: the part pattern matches the {name} description.\nPrediction: {name}")
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shared = unit(&gaussian(&mut rng, cfg.dim));
    let names: Vec<String> = (0..cfg.n_categories).map(display_name).collect();

    let mut categories = Vec::new();
    let mut support = Vec::new();
    let mut test = Vec::new();
    let mut embeddings = EmbeddingStore::default();
    // Reflection prompts carry the support image too, so the fixed
    // substring rules must come before any image rule.
    let mut rules = MockRules::default()
        .rule("Analyze this specific failure case", MOCK_DIAGNOSIS)
        .rule("You are a knowledge engineer", MOCK_RULE)
        .rule(
            "update the Self-Belief strategy",
            format!("{INITIAL_SELF_BELIEF}\n5. Verify: {MOCK_RULE}"),
        )
        .rule("expert taxonomist", MOCK_DESCRIPTION);

    for (i, name) in names.iter().enumerate() {
        let id = category_id(i);
        let own = unit(&gaussian(&mut rng, cfg.dim));
        let center = unit(
            &own.iter()
                .zip(&shared)
                .map(|(u, s)| (1.0 - cfg.overlap) * u + cfg.overlap * s)
                .collect::<Vec<_>>(),
        );

        let desc_key = description_key(&id);
        embeddings.insert(desc_key, jitter(&mut rng, &center, cfg.text_noise)?)?;
        categories.push(CategorySpec {
            category_id: id.clone(),
            display_name: name.clone(),
            description: Some(format!("{name}: a synthetic category with its own part pattern.")),
            description_embedding_ref: None,
        });

        for j in 0..cfg.k_shot {
            let sid = format!("s-{id}-{j}");
            let image = format!("img/{sid}.jpg");
            embeddings.insert(sid.clone(), jitter(&mut rng, &center, cfg.noise)?)?;
            let answer = if rng.random_bool(cfg.support_error_rate) {
                let others: Vec<&String> = names.iter().filter(|n| *n != name).collect();
                (*others.choose(&mut rng).expect("at least two categories")).clone()
            } else {
                name.clone()
            };
            rules = rules.rule(format!("image:{image}"), answer);
            support.push(ManifestEntry {
                sample_id: sid,
                label: Some(id.clone()),
                image_ref: Some(image),
                embedding_ref: None,
            });
        }
        for j in 0..cfg.test_per_category {
            let sid = format!("t-{id}-{j}");
            let image = format!("img/{sid}.jpg");
            embeddings.insert(sid.clone(), jitter(&mut rng, &center, cfg.noise)?)?;
            rules = rules.rule(format!("image:{image}"), oracle_answer(name));
            test.push(ManifestEntry {
                sample_id: sid,
                label: Some(id.clone()),
                image_ref: Some(image),
                embedding_ref: None,
            });
        }
    }

    Ok(SyntheticDataset {
        config: cfg.clone(),
        categories,
        support,
        test,
        embeddings,
        mock_rules: rules,
    })
}

impl SyntheticDataset {
    pub fn support_samples(&self) -> Result<Vec<SampleRecord>> {
        resolve_samples(&self.support, &self.embeddings)
    }

    pub fn test_samples(&self) -> Result<Vec<SampleRecord>> {
        resolve_samples(&self.test, &self.embeddings)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_jsonl(&dir.join(SUPPORT_FILE), &self.support)?;
        io::write_jsonl(&dir.join(TEST_FILE), &self.test)?;
        io::write_jsonl(&dir.join(EMBEDDINGS_FILE), &self.embeddings.records())?;
        save_categories(&dir.join(CATEGORIES_FILE), &self.categories)?;
        self.mock_rules.save(&dir.join(MOCK_RULES_FILE))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_a_seed() {
        let cfg = SyntheticConfig {
            n_categories: 4,
            test_per_category: 2,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.embeddings.records(), b.embeddings.records());
        assert_eq!(a.mock_rules, b.mock_rules);
        assert_eq!(a.support.len(), 12);
        assert_eq!(a.test.len(), 8);
        // 4 descriptions + 12 support + 8 test
        assert_eq!(a.embeddings.len(), 24);
        let c = generate(&SyntheticConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.embeddings.records(), c.embeddings.records());
    }

    #[test]
    fn vectors_are_unit() {
        let ds = generate(&SyntheticConfig::default()).unwrap();
        for r in ds.embeddings.records() {
            let n: f64 = r.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-5, "{} has norm {n}", r.id);
        }
    }

    #[test]
    fn overlap_pulls_centers_together() {
        let mean_cross_cos = |overlap: f64| {
            let ds = generate(&SyntheticConfig {
                overlap,
                noise: 0.0,
                ..Default::default()
            })
            .unwrap();
            let s = ds.support_samples().unwrap();
            let mut total = 0.0;
            let mut count = 0;
            for a in s.iter().step_by(3) {
                for b in s.iter().step_by(3) {
                    if a.label != b.label {
                        total += crate::embedding::cosine_similarity(&a.embedding, &b.embedding).unwrap();
                        count += 1;
                    }
                }
            }
            total / count as f64
        };
        assert!(mean_cross_cos(0.7) > mean_cross_cos(0.0) + 0.3);
    }

    #[test]
    fn rejects_bad_overlap() {
        let cfg = SyntheticConfig {
            overlap: 1.0,
            ..Default::default()
        };
        assert!(generate(&cfg).is_err());
    }
}
