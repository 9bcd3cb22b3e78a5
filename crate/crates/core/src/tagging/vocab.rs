use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagProvenance {
    Seed,
    CanonicalGen,
    LlmNew,
}

/// Lowercased, trimmed, whitespace-collapsed tag label.
pub fn normalize_tag(label: &str) -> String {
    label.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The controlled tag vocabulary. Labels are stored normalized; the first
/// provenance recorded for a label is kept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    tags: BTreeMap<String, TagProvenance>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a label; returns true when it was not present. Empty labels
    /// are ignored.
    pub fn insert(&mut self, label: &str, provenance: TagProvenance) -> bool {
        let label = normalize_tag(label);
        if label.is_empty() || self.tags.contains_key(&label) {
            return false;
        }
        self.tags.insert(label, provenance);
        true
    }

    pub fn contains(&self, label: &str) -> bool {
        self.tags.contains_key(&normalize_tag(label))
    }

    pub fn provenance(&self, label: &str) -> Option<TagProvenance> {
        self.tags.get(&normalize_tag(label)).copied()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.tags.keys().map(String::as_str)
    }
}
