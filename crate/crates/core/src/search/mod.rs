//! BM25 retrieval, tag refinement, dataset- and source-level navigation,
//! result summarization and the exploration-gain metric.

mod bm25;
mod nav;

pub use bm25::{widened_k, Bm25Params, ScoredHit, SearchIndex};
pub use nav::{source_info, EntityCard, KnowledgeSpace, NavIndex};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::exec::ExecMode;
use crate::lm::{vars, LanguageModelClient, LmError, PromptRequest, TemplateId};
use crate::schema::{DatasetId, DatasetRecord};
use crate::tagging::Vocabulary;

/// Records passed to the summarizer per group (initial and related).
pub const SUMMARY_RECORD_LIMIT: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("exploration gain is undefined for an empty initial result")]
    DegenerateQuery,
    #[error("knowledge space: {0}")]
    Knowledge(String),
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// `100 * related / initial`.
pub fn exploration_gain(initial_count: usize, related_count: usize) -> Result<f64, SearchError> {
    if initial_count == 0 {
        return Err(SearchError::DegenerateQuery);
    }
    Ok(100.0 * related_count as f64 / initial_count as f64)
}

fn record_line(r: &DatasetRecord) -> String {
    let desc = r.dataset_desc.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("{}: {}", r.dataset_name.trim(), desc)
}

fn provider_line(c: &EntityCard) -> String {
    let mut line = format!("{}: {}", c.name, c.kind);
    for part in [&c.domain, &c.activity_focus, &c.description] {
        if !part.trim().is_empty() {
            line.push_str(". ");
            line.push_str(part.trim());
        }
    }
    line
}

/// Renders the summarization prompt over initial and related records and
/// returns the client's text. The provider block is left empty (and its
/// line dropped) when there are no entities.
pub fn summarize(
    query: &str,
    hits: &[&DatasetRecord],
    related: &[&DatasetRecord],
    entities: &[&EntityCard],
    lm: &dyn LanguageModelClient,
) -> Result<String, SearchError> {
    let records: Vec<String> = hits
        .iter()
        .take(SUMMARY_RECORD_LIMIT)
        .chain(related.iter().take(SUMMARY_RECORD_LIMIT))
        .map(|r| record_line(r))
        .collect();
    let providers: Vec<String> = entities.iter().map(|c| provider_line(c)).collect();
    let req = PromptRequest::new(
        TemplateId::ResultSummarization,
        vars([
            ("user_query", query.to_string()),
            ("dataset_records", records.join("\n")),
            ("provider_info", providers.join("\n")),
        ]),
    )?;
    let out = lm.complete(&req)?;
    if out.trim().is_empty() {
        return Err(LmError::malformed("empty summary", out).into());
    }
    Ok(out.trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationBundle {
    pub query: String,
    pub initial: Vec<ScoredHit>,
    /// Datasets reached by navigation that are not already in `initial`.
    pub related: Vec<DatasetId>,
    pub entities: Vec<EntityCard>,
    pub summary: String,
    /// `None` when the initial result is empty.
    pub exploration_gain: Option<f64>,
}

/// An immutable search snapshot: BM25 index, navigation postings, record
/// lookup, the knowledge space and the tag vocabulary.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub index: SearchIndex,
    pub nav: NavIndex,
    pub knowledge: KnowledgeSpace,
    pub vocab: Vocabulary,
    records: HashMap<DatasetId, DatasetRecord>,
}

impl Catalog {
    pub fn build(
        records: &[DatasetRecord],
        knowledge: KnowledgeSpace,
        vocab: Vocabulary,
        params: Bm25Params,
        mode: ExecMode,
    ) -> Self {
        Self {
            index: SearchIndex::build(records, params, mode),
            nav: NavIndex::build(records),
            knowledge,
            vocab,
            records: records.iter().map(|r| (r.id.clone(), r.clone())).collect(),
        }
    }

    pub fn record(&self, id: &DatasetId) -> Option<&DatasetRecord> {
        self.records.get(id)
    }

    /// A record that search may show: known and visible.
    pub fn visible_record(&self, id: &DatasetId) -> Option<&DatasetRecord> {
        self.records.get(id).filter(|r| r.is_visible())
    }

    pub fn search(&self, query: &str, k: usize) -> Vec<ScoredHit> {
        self.index.search(query, k)
    }

    pub fn refine_by_tag(&self, query: &str, tag: &str, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        self.index.refine_by_tag(query, tag, k, &self.vocab)
    }

    pub fn navigate(&self, id: &DatasetId) -> Result<Vec<DatasetId>, SearchError> {
        self.nav.navigate(id)
    }

    /// Visible records carrying `tag` among their selected tags, in id order.
    pub fn datasets_with_tag(&self, tag: &str) -> Result<Vec<&DatasetRecord>, SearchError> {
        let tag = crate::tagging::normalize_tag(tag);
        if !self.vocab.contains(&tag) {
            return Err(SearchError::UnknownTag(tag));
        }
        let mut out: Vec<&DatasetRecord> = self
            .records
            .values()
            .filter(|r| r.is_visible() && r.tags_selected.iter().any(|t| crate::tagging::normalize_tag(t) == tag))
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// Visible records of a source, in id order.
    pub fn datasets_of_source(&self, source: &str) -> Vec<&DatasetRecord> {
        let mut out: Vec<&DatasetRecord> =
            self.records.values().filter(|r| r.is_visible() && r.source_name == source).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Initial retrieval, navigation from each hit (in rank order, new ids
    /// appended in id order), source cards for the initial hits, and the
    /// summary.
    pub fn explore(
        &self,
        query: &str,
        k: usize,
        lm: &dyn LanguageModelClient,
    ) -> Result<NavigationBundle, SearchError> {
        let initial = self.search(query, k);
        let initial_ids: BTreeSet<&DatasetId> = initial.iter().map(|h| &h.dataset_id).collect();
        let mut seen: BTreeSet<DatasetId> = BTreeSet::new();
        let mut related = Vec::new();
        let mut sources: Vec<&str> = Vec::new();
        for h in &initial {
            for n in self.navigate(&h.dataset_id)? {
                if !initial_ids.contains(&n) && seen.insert(n.clone()) {
                    related.push(n);
                }
            }
            if let Some(r) = self.record(&h.dataset_id) {
                if !sources.contains(&r.source_name.as_str()) {
                    sources.push(&r.source_name);
                }
            }
        }
        let entities: Vec<&EntityCard> = sources.iter().filter_map(|s| source_info(s, &self.knowledge)).collect();
        let hit_records: Vec<&DatasetRecord> = initial.iter().filter_map(|h| self.record(&h.dataset_id)).collect();
        let related_records: Vec<&DatasetRecord> = related.iter().filter_map(|id| self.record(id)).collect();
        let summary = summarize(query, &hit_records, &related_records, &entities, lm)?;
        let gain = exploration_gain(initial.len(), related.len()).ok();
        Ok(NavigationBundle {
            query: query.to_string(),
            initial,
            related,
            entities: entities.into_iter().cloned().collect(),
            summary,
            exploration_gain: gain,
        })
    }
}
