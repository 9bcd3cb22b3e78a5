use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::schema::DatasetId;

/// Structural part of the tag graph. Embeddings are held separately in an
/// [`EmbeddingCache`](super::EmbeddingCache) and are not persisted.
///
/// T2T edges are derived from co-occurrence counts: an edge joins `a` and `b`
/// exactly when `count(a, b) > tau_co`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagGraph {
    pub tau_co: u32,
    pub delta: f64,
    datasets: BTreeSet<DatasetId>,
    tags: BTreeSet<String>,
    d2t: BTreeMap<DatasetId, BTreeSet<String>>,
    d2d: BTreeMap<DatasetId, BTreeMap<DatasetId, f64>>,
    /// Per-dataset set of tags counted for co-occurrence.
    occurrences: BTreeMap<DatasetId, BTreeSet<String>>,
    /// Keyed by the lexicographically smaller label.
    cooccurrence: BTreeMap<String, BTreeMap<String, u32>>,
}

impl TagGraph {
    pub fn new(delta: f64, tau_co: u32) -> Self {
        Self { delta, tau_co, ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty() && self.tags.is_empty()
    }

    pub fn add_dataset(&mut self, id: DatasetId) -> bool {
        self.datasets.insert(id)
    }

    pub fn add_tag(&mut self, label: &str) -> bool {
        self.tags.insert(label.to_string())
    }

    pub fn has_dataset(&self, id: &DatasetId) -> bool {
        self.datasets.contains(id)
    }

    pub fn datasets(&self) -> impl Iterator<Item = &DatasetId> {
        self.datasets.iter()
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.tags.iter().map(String::as_str)
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }

    pub fn dataset_count(&self) -> usize {
        self.datasets.len()
    }

    pub fn add_d2t(&mut self, id: &DatasetId, tag: &str) {
        self.add_tag(tag);
        self.d2t.entry(id.clone()).or_default().insert(tag.to_string());
    }

    pub fn dataset_tags(&self, id: &DatasetId) -> impl Iterator<Item = &str> {
        self.d2t.get(id).into_iter().flatten().map(String::as_str)
    }

    /// Adds the D2D edge in both directions.
    pub fn add_d2d(&mut self, a: &DatasetId, b: &DatasetId, cosine: f64) {
        if a == b {
            return;
        }
        self.d2d.entry(a.clone()).or_default().insert(b.clone(), cosine);
        self.d2d.entry(b.clone()).or_default().insert(a.clone(), cosine);
    }

    pub fn d2d_neighbors(&self, id: &DatasetId) -> impl Iterator<Item = (&DatasetId, f64)> {
        self.d2d.get(id).into_iter().flatten().map(|(k, v)| (k, *v))
    }

    /// All D2D edges as `(a, b, cosine)` with `a < b`.
    pub fn d2d_edges(&self) -> Vec<(DatasetId, DatasetId, f64)> {
        let mut out = Vec::new();
        for (a, ns) in &self.d2d {
            for (b, c) in ns {
                if a < b {
                    out.push((a.clone(), b.clone(), *c));
                }
            }
        }
        out
    }

    /// All D2T edges as `(dataset, tag)`.
    pub fn d2t_edges(&self) -> Vec<(DatasetId, String)> {
        self.d2t.iter().flat_map(|(d, ts)| ts.iter().map(move |t| (d.clone(), t.clone()))).collect()
    }

    fn key<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn cooccurrence(&self, a: &str, b: &str) -> u32 {
        let (lo, hi) = Self::key(a, b);
        self.cooccurrence.get(lo).and_then(|m| m.get(hi)).copied().unwrap_or(0)
    }

    /// Records that `tags` occur in dataset `id`. Only tags not yet counted
    /// for this dataset contribute new pairs, so repeated calls are
    /// idempotent.
    pub fn record_occurrences<'a>(&mut self, id: &DatasetId, tags: impl IntoIterator<Item = &'a str>) {
        let seen = self.occurrences.entry(id.clone()).or_default();
        let mut fresh: Vec<String> = Vec::new();
        for t in tags {
            if !seen.contains(t) && !fresh.iter().any(|f| f == t) {
                fresh.push(t.to_string());
            }
        }
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (i, f) in fresh.iter().enumerate() {
            for s in seen.iter() {
                pairs.push((f.clone(), s.clone()));
            }
            for g in &fresh[i + 1..] {
                pairs.push((f.clone(), g.clone()));
            }
        }
        seen.extend(fresh);
        for (a, b) in pairs {
            let (lo, hi) = Self::key(&a, &b);
            *self.cooccurrence.entry(lo.to_string()).or_default().entry(hi.to_string()).or_insert(0) += 1;
        }
    }

    /// T2T neighbors of `tag` with their co-occurrence counts.
    pub fn t2t_neighbors(&self, tag: &str) -> Vec<(String, u32)> {
        let mut out = Vec::new();
        for (lo, m) in &self.cooccurrence {
            if lo == tag {
                out.extend(m.iter().filter(|(_, c)| **c > self.tau_co).map(|(hi, c)| (hi.clone(), *c)));
            } else if let Some(c) = m.get(tag) {
                if *c > self.tau_co {
                    out.push((lo.clone(), *c));
                }
            }
        }
        out.sort();
        out
    }

    /// Every T2T edge in both directions, `(from, to, count)`.
    pub fn t2t_edges(&self) -> Vec<(String, String, u32)> {
        let mut out = Vec::new();
        for (lo, m) in &self.cooccurrence {
            for (hi, c) in m {
                if *c > self.tau_co && lo != hi {
                    out.push((lo.clone(), hi.clone(), *c));
                    out.push((hi.clone(), lo.clone(), *c));
                }
            }
        }
        out.sort();
        out
    }
}
