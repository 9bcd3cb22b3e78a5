use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::schema::{DatasetId, DatasetRecord, EntityKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityCard {
    pub name: String,
    pub kind: EntityKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub activity_focus: String,
}

/// Source entities (sites, institutions, enterprises) keyed by source name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnowledgeSpace {
    entities: BTreeMap<String, EntityCard>,
}

impl KnowledgeSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, card: EntityCard) -> Result<(), SearchError> {
        if card.name.trim().is_empty() {
            return Err(SearchError::Knowledge("entity with empty name".into()));
        }
        if self.entities.contains_key(&card.name) {
            return Err(SearchError::Knowledge(format!("duplicate entity {:?}", card.name)));
        }
        self.entities.insert(card.name.clone(), card);
        Ok(())
    }

    /// Replaces or adds a card.
    pub fn upsert(&mut self, card: EntityCard) {
        self.entities.insert(card.name.clone(), card);
    }

    /// Parses a JSON array of cards or one card per line.
    pub fn parse(text: &str) -> Result<Self, SearchError> {
        let trimmed = text.trim_start();
        let cards: Vec<EntityCard> = if trimmed.starts_with('[') {
            serde_json::from_str(text).map_err(|e| SearchError::Knowledge(e.to_string()))?
        } else {
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str(l).map_err(|e| SearchError::Knowledge(format!("line {}: {e}", i + 1)))
                })
                .collect::<Result<_, _>>()?
        };
        let mut ks = Self::new();
        for c in cards {
            ks.insert(c)?;
        }
        Ok(ks)
    }

    pub fn load(path: &Path) -> Result<Self, SearchError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SearchError::Knowledge(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, source_name: &str) -> Option<&EntityCard> {
        self.entities.get(source_name)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntityCard> {
        self.entities.values()
    }
}

/// Exact-key lookup of a source's entity card.
pub fn source_info<'a>(source_name: &str, ks: &'a KnowledgeSpace) -> Option<&'a EntityCard> {
    ks.get(source_name)
}

/// Source and selected-tag postings over visible records, plus the
/// source/tags of every known record so navigation can start from any of
/// them.
#[derive(Debug, Clone, Default)]
pub struct NavIndex {
    by_source: HashMap<String, BTreeSet<DatasetId>>,
    by_tag: HashMap<String, BTreeSet<DatasetId>>,
    known: HashMap<DatasetId, (String, Vec<String>)>,
}

impl NavIndex {
    pub fn build(records: &[DatasetRecord]) -> Self {
        let mut idx = Self::default();
        for r in records {
            idx.known.insert(r.id.clone(), (r.source_name.clone(), r.tags_selected.clone()));
            if !r.is_visible() {
                continue;
            }
            idx.by_source.entry(r.source_name.clone()).or_default().insert(r.id.clone());
            for t in &r.tags_selected {
                idx.by_tag.entry(t.clone()).or_default().insert(r.id.clone());
            }
        }
        idx
    }

    /// Visible records other than `id` sharing its source or one of its
    /// selected tags, in id order. Weakly related tags play no part.
    pub fn navigate(&self, id: &DatasetId) -> Result<Vec<DatasetId>, SearchError> {
        let (source, tags) = self.known.get(id).ok_or_else(|| SearchError::UnknownDataset(id.to_string()))?;
        let mut out: BTreeSet<&DatasetId> = BTreeSet::new();
        if let Some(s) = self.by_source.get(source) {
            out.extend(s);
        }
        for t in tags {
            if let Some(s) = self.by_tag.get(t) {
                out.extend(s);
            }
        }
        out.remove(id);
        Ok(out.into_iter().cloned().collect())
    }
}
