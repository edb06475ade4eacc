//! Class-conditional retrieval statistics gathered on the support set.
//!
//! `n` counts how often a category came out as the top-1 retrieval;
//! `total_N` is the number of retrieval events overall. Together they drive
//! the Hoeffding-style evidence penalty `sqrt(ln N / (2 n_c))`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    #[serde(rename = "n")]
    pub n_c: u64,
    #[serde(rename = "correct")]
    pub correct_c: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsLibrary {
    #[serde(rename = "total_N")]
    total_n: u64,
    per_category: BTreeMap<String, CategoryStats>,
}

impl StatsLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Library with a zero entry for every listed category.
    pub fn with_categories<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            total_n: 0,
            per_category: ids
                .into_iter()
                .map(|id| (id.to_string(), CategoryStats::default()))
                .collect(),
        }
    }

    pub fn record_retrieval(&mut self, top1_category: &str, was_correct: bool) {
        let entry = self
            .per_category
            .entry(top1_category.to_string())
            .or_default();
        entry.n_c += 1;
        if was_correct {
            entry.correct_c += 1;
        }
        self.total_n += 1;
        debug_assert!(self.check().is_ok());
    }

    pub fn total_n(&self) -> u64 {
        self.total_n
    }

    pub fn get(&self, category: &str) -> CategoryStats {
        self.per_category.get(category).copied().unwrap_or_default()
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &CategoryStats)> {
        self.per_category.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// `sqrt(ln(max(N, 2)) / (2 n_c))`, or `+inf` for a category that was
    /// never retrieved.
    pub fn uncertainty_penalty(&self, category: &str) -> f64 {
        hoeffding_penalty(self.total_n, self.get(category).n_c)
    }

    fn check(&self) -> std::result::Result<(), String> {
        let mut sum = 0u64;
        for (id, s) in &self.per_category {
            if s.correct_c > s.n_c {
                return Err(format!(
                    "per_category.{id}: correct ({}) exceeds n ({})",
                    s.correct_c, s.n_c
                ));
            }
            sum += s.n_c;
        }
        if sum != self.total_n {
            return Err(format!("total_N {} != sum of n ({sum})", self.total_n));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lib: StatsLibrary = io::read_json(path)?;
        lib.check()
            .map_err(|m| Error::format(path.display().to_string(), m))?;
        Ok(lib)
    }
}

pub fn hoeffding_penalty(total_n: u64, n_c: u64) -> f64 {
    if n_c == 0 {
        return f64::INFINITY;
    }
    let n = total_n.max(2) as f64;
    (n.ln() / (2.0 * n_c as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_event() {
        let mut s = StatsLibrary::new();
        s.record_retrieval("c", true);
        assert_eq!(s.get("c"), CategoryStats { n_c: 1, correct_c: 1 });
        assert_eq!(s.total_n(), 1);
    }

    #[test]
    fn counters_sum() {
        let mut s = StatsLibrary::new();
        for _ in 0..5 {
            s.record_retrieval("a", false);
        }
        assert_eq!(s.get("a").n_c, 5);
        assert_eq!(s.get("a").correct_c, 0);
        assert_eq!(s.total_n(), 5);

        let mut s = StatsLibrary::new();
        for _ in 0..3 {
            s.record_retrieval("a", true);
        }
        for _ in 0..2 {
            s.record_retrieval("b", true);
        }
        assert_eq!(s.total_n(), 5);
    }

    #[test]
    fn penalty_values() {
        // sqrt(ln 300 / 60) = 0.308324...
        let p = hoeffding_penalty(300, 30);
        assert!((p - (300f64.ln() / 60.0).sqrt()).abs() < 1e-12);
        assert!((p - 0.30832).abs() < 1e-5);
        assert!(hoeffding_penalty(300, 0).is_infinite());
        assert!(StatsLibrary::new().uncertainty_penalty("unseen").is_infinite());
        // N floored at 2
        assert!((hoeffding_penalty(1, 1) - (2f64.ln() / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.json");
        let mut s = StatsLibrary::with_categories(["a", "b", "z"]);
        s.record_retrieval("a", true);
        s.record_retrieval("a", false);
        s.record_retrieval("b", true);
        s.save(&path).unwrap();
        assert_eq!(StatsLibrary::load(&path).unwrap(), s);

        std::fs::write(&path, r#"{"total_N": 2, "per_category": {"a": {"n": 2, "correct": 3}}}"#)
            .unwrap();
        assert!(matches!(StatsLibrary::load(&path), Err(Error::Format { .. })));

        std::fs::write(&path, r#"{"total_N": 7, "per_category": {"a": {"n": 2, "correct": 1}}}"#)
            .unwrap();
        assert!(matches!(StatsLibrary::load(&path), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn doubling_n_divides_by_sqrt2(total in 2u64..100_000, n in 1u64..10_000) {
            let a = hoeffding_penalty(total, n);
            let b = hoeffding_penalty(total, 2 * n);
            prop_assert!((a / b - std::f64::consts::SQRT_2).abs() < 1e-9);
        }

        #[test]
        fn penalty_strictly_decreasing(total in 3u64..100_000, n in 1u64..10_000) {
            prop_assert!(hoeffding_penalty(total, n + 1) < hoeffding_penalty(total, n));
            prop_assert!(hoeffding_penalty(total, n).is_finite());
            prop_assert!(hoeffding_penalty(total, n) >= 0.0);
        }

        #[test]
        fn total_tracks_sum(events in prop::collection::vec((0u8..6, any::<bool>()), 0..200)) {
            let mut s = StatsLibrary::new();
            for (c, ok) in &events {
                s.record_retrieval(&format!("c{c}"), *ok);
                prop_assert!(s.check().is_ok());
            }
            prop_assert_eq!(s.total_n(), events.len() as u64);
        }
    }
}
