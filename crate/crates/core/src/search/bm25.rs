use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::exec::ExecMode;
use crate::schema::{DatasetId, DatasetRecord};
use crate::tagging::Vocabulary;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub kappa: f64,
    pub beta: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { kappa: 1.2, beta: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub dataset_id: DatasetId,
    pub score: f64,
}

/// Inverted index over name + description of visible records. Documents are
/// numbered in ascending id order.
#[derive(Debug, Clone, Default)]
pub struct SearchIndex {
    params: Bm25Params,
    ids: Vec<DatasetId>,
    doc_len: Vec<u32>,
    tags: Vec<Vec<String>>,
    postings: HashMap<String, Vec<(u32, u32)>>,
    avgdl: f64,
}

/// Widened pool size used before tag filtering.
pub fn widened_k(k: usize) -> usize {
    (k.saturating_mul(10)).max(100)
}

impl SearchIndex {
    pub fn build(records: &[DatasetRecord], params: Bm25Params, mode: ExecMode) -> Self {
        let mut visible: Vec<&DatasetRecord> = records.iter().filter(|r| r.is_visible()).collect();
        visible.sort_by(|a, b| a.id.cmp(&b.id));
        visible.dedup_by(|a, b| a.id == b.id);
        let tokens: Vec<Vec<String>> =
            mode.map(&visible, |r| tokenize(&format!("{} {}", r.dataset_name, r.dataset_desc)));
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(visible.len());
        for (doc, toks) in tokens.iter().enumerate() {
            doc_len.push(toks.len() as u32);
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t.as_str()).or_insert(0) += 1;
            }
            for (t, f) in tf {
                postings.entry(t.to_string()).or_default().push((doc as u32, f));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable();
        }
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avgdl = if doc_len.is_empty() { 0.0 } else { total as f64 / doc_len.len() as f64 };
        Self {
            params,
            ids: visible.iter().map(|r| r.id.clone()).collect(),
            doc_len,
            tags: visible.iter().map(|r| r.tags_selected.clone()).collect(),
            postings,
            avgdl,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn contains(&self, id: &DatasetId) -> bool {
        self.doc_index(id).is_some()
    }

    fn doc_index(&self, id: &DatasetId) -> Option<usize> {
        self.ids.binary_search(id).ok()
    }

    pub fn doc_len(&self, id: &DatasetId) -> Option<u32> {
        self.doc_index(id).map(|i| self.doc_len[i])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_freq(&self, term: &str, id: &DatasetId) -> u32 {
        let Some(doc) = self.doc_index(id) else { return 0 };
        self.postings
            .get(term)
            .and_then(|l| l.binary_search_by_key(&(doc as u32), |p| p.0).ok().map(|i| l[i].1))
            .unwrap_or(0)
    }

    /// `ln((N - n + 0.5) / (n + 0.5) + 1)`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_score(&self, idf: f64, f: u32, len: u32) -> f64 {
        let Bm25Params { kappa, beta } = self.params;
        let f = f64::from(f);
        let norm = if self.avgdl > 0.0 { f64::from(len) / self.avgdl } else { 0.0 };
        idf * f * (kappa + 1.0) / (f + kappa * (1.0 - beta + beta * norm))
    }

    /// Distinct query terms in first-occurrence order.
    pub fn query_terms(query: &str) -> Vec<String> {
        let mut seen = BTreeSet::new();
        tokenize(query).into_iter().filter(|t| seen.insert(t.clone())).collect()
    }

    /// BM25 score of one document; 0 for documents outside the index.
    pub fn score(&self, query: &str, id: &DatasetId) -> f64 {
        let Some(doc) = self.doc_index(id) else { return 0.0 };
        Self::query_terms(query)
            .iter()
            .map(|t| {
                let f = self.term_freq(t, id);
                if f == 0 {
                    0.0
                } else {
                    self.term_score(self.idf(t), f, self.doc_len[doc])
                }
            })
            .sum()
    }

    /// Top `k` hits with positive score, by score descending then id.
    pub fn search(&self, query: &str, k: usize) -> Vec<ScoredHit> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for t in Self::query_terms(query) {
            let Some(list) = self.postings.get(&t) else { continue };
            let idf = self.idf(&t);
            for &(doc, f) in list {
                *acc.entry(doc).or_insert(0.0) += self.term_score(idf, f, self.doc_len[doc as usize]);
            }
        }
        let mut hits: Vec<(u32, f64)> = acc.into_iter().filter(|(_, s)| *s > 0.0).collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        hits.truncate(k);
        hits.into_iter().map(|(doc, score)| ScoredHit { dataset_id: self.ids[doc as usize].clone(), score }).collect()
    }

    /// Searches a widened pool and keeps hits whose selected tags include
    /// `tag`.
    pub fn refine_by_tag(
        &self,
        query: &str,
        tag: &str,
        k: usize,
        vocab: &Vocabulary,
    ) -> Result<Vec<ScoredHit>, SearchError> {
        let tag = crate::tagging::normalize_tag(tag);
        if !vocab.contains(&tag) {
            return Err(SearchError::UnknownTag(tag));
        }
        let mut out: Vec<ScoredHit> = self
            .search(query, widened_k(k))
            .into_iter()
            .filter(|h| {
                let doc = self.doc_index(&h.dataset_id).expect("hit is indexed");
                self.tags[doc].iter().any(|t| crate::tagging::normalize_tag(t) == tag)
            })
            .collect();
        out.truncate(k);
        Ok(out)
    }

    /// Selected-tag counts over the given hits, by count descending then
    /// label.
    pub fn tag_histogram(&self, hits: &[ScoredHit]) -> Vec<(String, usize)> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for h in hits {
            if let Some(doc) = self.doc_index(&h.dataset_id) {
                for t in &self.tags[doc] {
                    *counts.entry(t.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut out: Vec<(String, usize)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}
