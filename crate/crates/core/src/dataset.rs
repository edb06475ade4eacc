//! Dataset manifests, the shared embeddings file, and category lists.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::io;

/// One line of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Key into the embeddings file; defaults to `sample_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
}

impl ManifestEntry {
    pub fn embedding_key(&self) -> &str {
        self.embedding_ref.as_deref().unwrap_or(&self.sample_id)
    }
}

/// One line of the embeddings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, v: &EmbeddingVector) -> Self {
        Self {
            id: id.into(),
            dim: v.dim(),
            values: v.values().iter().map(|&x| f64::from(x)).collect(),
        }
    }
}

/// Embeddings keyed by id. All vectors share one dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: Option<usize>,
    vectors: HashMap<String, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn from_records(records: Vec<EmbeddingRecord>, origin: &str) -> Result<Self> {
        let mut store = EmbeddingStore::default();
        for (i, rec) in records.into_iter().enumerate() {
            let at = || format!("{origin}: record {} (id {})", i + 1, rec.id);
            if rec.values.len() != rec.dim {
                return Err(Error::format(
                    at(),
                    format!("dim is {} but {} values given", rec.dim, rec.values.len()),
                ));
            }
            let v = EmbeddingVector::from_f64(&rec.values).map_err(|e| Error::format(at(), e.to_string()))?;
            store.insert(rec.id.clone(), v).map_err(|e| Error::format(at(), e.to_string()))?;
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<EmbeddingRecord> = io::read_jsonl(path)?;
        Self::from_records(records, &path.display().to_string())
    }

    pub fn insert(&mut self, id: String, v: EmbeddingVector) -> Result<()> {
        match self.dim {
            Some(d) if d != v.dim() => {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: v.dim(),
                })
            }
            _ => self.dim = Some(v.dim()),
        }
        if self.vectors.contains_key(&id) {
            return Err(Error::Precondition(format!("duplicate embedding id {id}")));
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }

    /// Records sorted by id.
    pub fn records(&self) -> Vec<EmbeddingRecord> {
        let mut ids: Vec<&String> = self.vectors.keys().collect();
        ids.sort();
        ids.into_iter()
            .map(|id| EmbeddingRecord::new(id.clone(), &self.vectors[id]))
            .collect()
    }
}

/// A sample with its embedding resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub embedding: EmbeddingVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let entries: Vec<ManifestEntry> = io::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for e in &entries {
        if !seen.insert(e.sample_id.as_str()) {
            return Err(Error::format(
                path.display().to_string(),
                format!("duplicate sample_id {}", e.sample_id),
            ));
        }
    }
    Ok(entries)
}

/// Joins manifest entries with their embeddings.
pub fn resolve_samples(entries: &[ManifestEntry], store: &EmbeddingStore) -> Result<Vec<SampleRecord>> {
    entries
        .iter()
        .map(|e| {
            let embedding = store.get(e.embedding_key()).ok_or_else(|| {
                Error::format(
                    format!("sample {}", e.sample_id),
                    format!("no embedding with id {}", e.embedding_key()),
                )
            })?;
            Ok(SampleRecord {
                sample_id: e.sample_id.clone(),
                embedding: embedding.clone(),
                image_ref: e.image_ref.clone(),
                label: e.label.clone(),
            })
        })
        .collect()
}

pub fn load_samples(manifest: &Path, store: &EmbeddingStore) -> Result<Vec<SampleRecord>> {
    resolve_samples(&read_manifest(manifest)?, store)
}

/// Every sample must carry a label.
pub fn require_labels(samples: &[SampleRecord]) -> Result<()> {
    match samples.iter().find(|s| s.label.is_none()) {
        Some(s) => Err(Error::format(
            format!("sample {}", s.sample_id),
            "label is required here",
        )),
        None => Ok(()),
    }
}

/// One entry of `categories.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub category_id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Key of the description embedding; defaults to `desc:<category_id>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_embedding_ref: Option<String>,
}

impl CategorySpec {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            category_id: id.into(),
            display_name: name.into(),
            description: None,
            description_embedding_ref: None,
        }
    }

    pub fn description_key(&self) -> String {
        self.description_embedding_ref
            .clone()
            .unwrap_or_else(|| description_key(&self.category_id))
    }
}

pub fn description_key(category_id: &str) -> String {
    format!("desc:{category_id}")
}

pub fn load_categories(path: &Path) -> Result<Vec<CategorySpec>> {
    let cats: Vec<CategorySpec> = io::read_json(path)?;
    validate_categories(&cats).map_err(|m| Error::format(path.display().to_string(), m))?;
    Ok(cats)
}

fn validate_categories(cats: &[CategorySpec]) -> std::result::Result<(), String> {
    if cats.is_empty() {
        return Err("category list is empty".into());
    }
    let mut seen = HashSet::new();
    for (i, c) in cats.iter().enumerate() {
        if c.category_id.trim().is_empty() {
            return Err(format!("[{i}].category_id is blank"));
        }
        if !seen.insert(c.category_id.as_str()) {
            return Err(format!("[{i}]: duplicate category_id {}", c.category_id));
        }
    }
    Ok(())
}

pub fn save_categories(path: &Path, cats: &[CategorySpec]) -> Result<()> {
    io::write_json(path, &cats)
}

/// One line of the text manifest consumed by the embedding exporter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextItem {
    pub id: String,
    pub text: String,
}
