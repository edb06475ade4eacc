//! Dense embedding vectors and the similarity primitives built on them.
//!
//! Components are stored as `f32`; every reduction (norms, dot products,
//! means) is accumulated in `f64`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Wraps raw components without normalizing them.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding has no components"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("embedding", "non-finite component"));
        }
        Ok(Self { values })
    }

    /// Wraps raw components and scales them to unit L2 norm.
    pub fn unit(values: Vec<f32>) -> Result<Self> {
        normalize(&Self::new(values)?)
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl Serialize for EmbeddingVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        // Widening keeps every digit an f32 carries in the decimal output.
        serializer.collect_seq(self.values.iter().map(|&v| f64::from(v)))
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        EmbeddingVector::from_f64(&raw).map_err(serde::de::Error::custom)
    }
}

pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(EmbeddingVector {
        values: v
            .values
            .iter()
            .map(|&x| (f64::from(x) / norm) as f32)
            .collect(),
    })
}

pub fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum())
}

/// Cosine similarity of two unit vectors, i.e. their dot product.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    dot(a, b)
}

/// Component-wise mean, re-normalized to unit length.
pub fn mean_embedding(vs: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = vs
        .first()
        .ok_or(Error::EmptyInput("no embeddings to average"))?;
    let dim = first.dim();
    let mut acc = vec![0.0f64; dim];
    for v in vs {
        if v.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        for (a, &x) in acc.iter_mut().zip(&v.values) {
            *a += f64::from(x);
        }
    }
    let n = vs.len() as f64;
    let norm = acc.iter().map(|a| (a / n) * (a / n)).sum::<f64>().sqrt();
    // The mean of antipodal unit vectors collapses to (numerically) zero.
    if norm <= 1e-12 {
        return Err(Error::ZeroVector);
    }
    Ok(EmbeddingVector {
        values: acc.iter().map(|a| ((a / n) / norm) as f32).collect(),
    })
}
