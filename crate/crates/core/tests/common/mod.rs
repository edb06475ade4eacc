#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use sare_core::dataset::{CategorySpec, EmbeddingStore, SampleRecord};
use sare_core::embedding::EmbeddingVector;
use sare_core::experience::ExperienceLibrary;
use sare_core::gateway::{Gateway, MockBackend, MockRules};
use sare_core::prototype::{CategoryRecord, PrototypeLibrary};
use sare_core::stats::StatsLibrary;
use sare_core::synthetic::{SyntheticDataset, CATEGORIES_FILE, EMBEDDINGS_FILE, MOCK_RULES_FILE, SUPPORT_FILE, TEST_FILE};
use sare_core::{dataset, KnowledgeBase};

pub const OVERLAPS: [&str; 5] = ["0.0", "0.2", "0.4", "0.6", "0.8"];

pub fn fixture_dir(overlap: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(format!("overlap_{overlap}"))
}

/// A checked-in synthetic dataset, read back through the public loaders.
pub struct Fixture {
    pub categories: Vec<CategorySpec>,
    pub support: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    pub embeddings: EmbeddingStore,
    pub rules: MockRules,
}

pub fn load_fixture(overlap: &str) -> Fixture {
    let dir = fixture_dir(overlap);
    let embeddings = EmbeddingStore::load(&dir.join(EMBEDDINGS_FILE)).unwrap();
    Fixture {
        categories: dataset::load_categories(&dir.join(CATEGORIES_FILE)).unwrap(),
        support: dataset::load_samples(&dir.join(SUPPORT_FILE), &embeddings).unwrap(),
        test: dataset::load_samples(&dir.join(TEST_FILE), &embeddings).unwrap(),
        rules: MockRules::load(&dir.join(MOCK_RULES_FILE)).unwrap(),
        embeddings,
    }
}

pub fn from_synthetic(ds: &SyntheticDataset) -> Fixture {
    Fixture {
        categories: ds.categories.clone(),
        support: ds.support_samples().unwrap(),
        test: ds.test_samples().unwrap(),
        embeddings: ds.embeddings.clone(),
        rules: ds.mock_rules.clone(),
    }
}

pub fn mock_gateway(rules: MockRules) -> (Gateway, Arc<MockBackend>) {
    let mock = Arc::new(MockBackend::new(rules));
    (Gateway::new(mock.clone()), mock)
}

pub fn basis(dim: usize, i: usize) -> EmbeddingVector {
    let mut v = vec![0.0f32; dim];
    v[i] = 1.0;
    EmbeddingVector::new(v).unwrap()
}

pub fn name(i: usize) -> String {
    format!("Category {}", (b'A' + i as u8) as char)
}

/// `n` categories whose prototypes are the first `n` basis vectors.
pub fn axis_library(n: usize, dim: usize) -> PrototypeLibrary {
    let records = (0..n)
        .map(|i| CategoryRecord {
            category_id: format!("c{i}"),
            display_name: name(i),
            description: format!("{} description", name(i)),
            visual_prototype: basis(dim, i),
            textual_prototype: basis(dim, i),
        })
        .collect();
    PrototypeLibrary::from_records(records).unwrap()
}

/// Statistics where each category was the retrieval top-1 `n_each` times.
pub fn uniform_stats(lib: &PrototypeLibrary, n_each: u64) -> StatsLibrary {
    let mut stats = StatsLibrary::with_categories(lib.records().iter().map(|r| r.category_id.as_str()));
    for r in lib.records() {
        for _ in 0..n_each {
            stats.record_retrieval(&r.category_id, true);
        }
    }
    stats
}

pub fn axis_kb(n: usize, dim: usize, n_each: u64) -> KnowledgeBase {
    let prototypes = axis_library(n, dim);
    let stats = uniform_stats(&prototypes, n_each);
    KnowledgeBase {
        prototypes,
        stats,
        experience: ExperienceLibrary::default(),
    }
}

pub fn sample(id: &str, values: Vec<f32>, label: Option<&str>) -> SampleRecord {
    SampleRecord {
        sample_id: id.into(),
        embedding: EmbeddingVector::new(values).unwrap(),
        image_ref: Some(format!("img/{id}.jpg")),
        label: label.map(str::to_string),
    }
}
