//! Brute-force reference implementations used by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use datanav_core::embed::Embedder;
use datanav_core::schema::{normalize_name, unified_text};
use datanav_core::{DatasetId, DatasetRecord};

/// Connected components of an undirected edge list by BFS, singletons
/// dropped, sorted.
pub fn components(edges: &[(DatasetId, DatasetId)]) -> Vec<BTreeSet<DatasetId>> {
    let mut adj: HashMap<&DatasetId, Vec<&DatasetId>> = HashMap::new();
    for (a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen: BTreeSet<&DatasetId> = BTreeSet::new();
    let mut nodes: Vec<&DatasetId> = adj.keys().copied().collect();
    nodes.sort();
    let mut out = Vec::new();
    for start in nodes {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if seen.insert(m) {
                    comp.insert(m.clone());
                    queue.push_back(m);
                }
            }
        }
        if comp.len() > 1 {
            out.push(comp);
        }
    }
    out.sort();
    out
}

/// Every pair that matches on identifiers or has cosine >= theta.
pub fn duplicate_pairs(records: &[DatasetRecord], embedder: &dyn Embedder, theta: f64) -> Vec<(usize, usize, f64)> {
    let embs: Vec<_> =
        records.iter().map(|r| embedder.embed(&unified_text(&r.dataset_name, &r.dataset_desc)).unwrap()).collect();
    let mut out = Vec::new();
    for i in 0..records.len() {
        for j in (i + 1)..records.len() {
            let (a, b) = (&records[i], &records[j]);
            let na = normalize_name(&a.dataset_name);
            let same_name = !na.is_empty() && na == normalize_name(&b.dataset_name);
            let same_url = !a.dataset_url.is_empty() && a.dataset_url == b.dataset_url;
            let cos = embs[i].cosine(&embs[j]);
            if same_name || same_url || cos >= theta {
                out.push((i, j, cos));
            }
        }
    }
    out
}

pub fn dedup_oracle(records: &[DatasetRecord], embedder: &dyn Embedder, theta: f64) -> Vec<BTreeSet<DatasetId>> {
    let edges: Vec<(DatasetId, DatasetId)> = duplicate_pairs(records, embedder, theta)
        .into_iter()
        .map(|(i, j, _)| (records[i].id.clone(), records[j].id.clone()))
        .collect();
    components(&edges)
}

fn ref_tokens(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Line-by-line BM25 over the visible records, straight from the formula.
pub struct Bm25Reference<'a> {
    docs: Vec<(&'a DatasetId, Vec<String>)>,
    avgdl: f64,
    kappa: f64,
    beta: f64,
}

impl<'a> Bm25Reference<'a> {
    pub fn new(records: &'a [DatasetRecord], kappa: f64, beta: f64) -> Self {
        let docs: Vec<(&DatasetId, Vec<String>)> = records
            .iter()
            .filter(|r| r.is_visible())
            .map(|r| (&r.id, ref_tokens(&format!("{} {}", r.dataset_name, r.dataset_desc))))
            .collect();
        let avgdl = docs.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / docs.len() as f64;
        Self { docs, avgdl, kappa, beta }
    }

    pub fn score(&self, query: &str, id: &DatasetId) -> f64 {
        let Some((_, doc)) = self.docs.iter().find(|(d, _)| *d == id) else {
            return 0.0;
        };
        let n = self.docs.len() as f64;
        let mut terms: Vec<String> = Vec::new();
        for t in ref_tokens(query) {
            if !terms.contains(&t) {
                terms.push(t);
            }
        }
        let mut score = 0.0;
        for t in &terms {
            let df = self.docs.iter().filter(|(_, toks)| toks.contains(t)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            let f = doc.iter().filter(|x| *x == t).count() as f64;
            let dl = doc.len() as f64;
            score += idf * f * (self.kappa + 1.0) / (f + self.kappa * (1.0 - self.beta + self.beta * dl / self.avgdl));
        }
        score
    }

    /// Exhaustive ranking: score every visible record, keep positives, order
    /// by score descending then id.
    pub fn ranking(&self, query: &str, k: usize) -> Vec<(DatasetId, f64)> {
        let mut all: Vec<(DatasetId, f64)> =
            self.docs.iter().map(|(id, _)| ((*id).clone(), self.score(query, id))).filter(|(_, s)| *s > 0.0).collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }
}

/// Visible records other than `d` that share its source or a selected tag.
pub fn nav_oracle(records: &[DatasetRecord], d: &DatasetId) -> BTreeSet<DatasetId> {
    let me = records.iter().find(|r| &r.id == d).expect("known dataset");
    records
        .iter()
        .filter(|r| r.id != *d && r.is_visible())
        .filter(|r| r.source_name == me.source_name || r.tags_selected.iter().any(|t| me.tags_selected.contains(t)))
        .map(|r| r.id.clone())
        .collect()
}
