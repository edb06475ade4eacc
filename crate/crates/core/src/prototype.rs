//! Multimodal prototype library: one visual and one textual prototype per
//! category, plus the generated description the textual prototype encodes.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{mean_embedding, normalize, EmbeddingVector};
use crate::error::{Error, Result};
use crate::io;

/// Unit-norm tolerance applied when loading persisted prototypes.
const LOAD_NORM_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub category_id: String,
    pub display_name: String,
    pub description: String,
    pub visual_prototype: EmbeddingVector,
    pub textual_prototype: EmbeddingVector,
}

/// Visual prototype is the renormalized mean of the support embeddings;
/// textual prototype is the normalized description embedding.
pub fn build_category_record(
    category_id: &str,
    display_name: &str,
    support_embeddings: &[EmbeddingVector],
    description: &str,
    description_embedding: &EmbeddingVector,
) -> Result<CategoryRecord> {
    if support_embeddings.is_empty() {
        return Err(Error::EmptyInput("category has no support embeddings"));
    }
    if description.trim().is_empty() {
        return Err(Error::EmptyInput("category description is blank"));
    }
    let visual = mean_embedding(support_embeddings)?;
    let textual = normalize(description_embedding)?;
    if visual.dim() != textual.dim() {
        return Err(Error::DimMismatch {
            expected: visual.dim(),
            found: textual.dim(),
        });
    }
    Ok(CategoryRecord {
        category_id: category_id.to_string(),
        display_name: display_name.to_string(),
        description: description.to_string(),
        visual_prototype: visual,
        textual_prototype: textual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeLibrary {
    dim: usize,
    records: Vec<CategoryRecord>,
}

impl PrototypeLibrary {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            records: Vec::new(),
        }
    }

    pub fn from_records(records: Vec<CategoryRecord>) -> Result<Self> {
        let dim = records
            .first()
            .map(|r| r.visual_prototype.dim())
            .ok_or(Error::EmptyLibrary)?;
        let mut lib = Self::new(dim);
        for r in records {
            lib.push(r)?;
        }
        Ok(lib)
    }

    pub fn push(&mut self, record: CategoryRecord) -> Result<()> {
        for proto in [&record.visual_prototype, &record.textual_prototype] {
            if proto.dim() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    found: proto.dim(),
                });
            }
        }
        if self.get(&record.category_id).is_some() {
            return Err(Error::format(
                "prototype library",
                format!("duplicate category_id {}", record.category_id),
            ));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CategoryRecord] {
        &self.records
    }

    pub fn get(&self, category_id: &str) -> Option<&CategoryRecord> {
        self.records.iter().find(|r| r.category_id == category_id)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lib: PrototypeLibrary = io::read_json(path)?;
        lib.validate(&path.display().to_string())?;
        Ok(lib)
    }

    fn validate(&self, origin: &str) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::format(origin, "dim must be positive"));
        }
        let mut seen = HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if !seen.insert(r.category_id.as_str()) {
                return Err(Error::format(
                    format!("{origin}: records[{i}].category_id"),
                    format!("duplicate category_id {}", r.category_id),
                ));
            }
            for (field, proto) in [
                ("visual_prototype", &r.visual_prototype),
                ("textual_prototype", &r.textual_prototype),
            ] {
                if proto.dim() != self.dim {
                    return Err(Error::format(
                        format!("{origin}: records[{i}].{field}"),
                        format!("dim {} does not match library dim {}", proto.dim(), self.dim),
                    ));
                }
                if !proto.is_unit(LOAD_NORM_TOL) {
                    return Err(Error::format(
                        format!("{origin}: records[{i}].{field}"),
                        format!("prototype is not unit norm (norm {})", proto.norm()),
                    ));
                }
            }
        }
        Ok(())
    }
}
