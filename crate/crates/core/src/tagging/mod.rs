//! Topic tagging: candidate pool construction, the tag graph (D2T, D2D and
//! T2T edges), multi-path candidate recall, language-model refinement to
//! exactly two tags, and vocabulary evolution.

mod graph;
mod vocab;

pub use graph::TagGraph;
pub use vocab::{normalize_tag, TagProvenance, Vocabulary};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embed::{EmbedError, Embedder, EmbeddingVector};
use crate::exec::ExecMode;
use crate::lm::{parse_json_object, vars, LanguageModelClient, LmError, PromptRequest, TemplateId};
use crate::schema::{unified_text, DatasetId, DatasetRecord};
use crate::text::tokenize;

pub const DEFAULT_DELTA: f64 = 0.80;
pub const DEFAULT_TAU_CO: u32 = 2;
pub const DEFAULT_K_DT: usize = 5;
pub const DEFAULT_MAX_CANDIDATES: usize = 10;
/// Minimum description length for a record to join the canonical subset.
pub const CANONICAL_MIN_DESC_CHARS: usize = 80;
/// Longest tag (in tokens) matched as a phrase in dataset text.
const MAX_PHRASE_TOKENS: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum TaggingError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("invalid tagging parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagParams {
    pub delta: f64,
    pub tau_co: u32,
    pub k_dt: usize,
    pub max_candidates: usize,
}

impl Default for TagParams {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            tau_co: DEFAULT_TAU_CO,
            k_dt: DEFAULT_K_DT,
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

impl TagParams {
    pub fn validate(&self) -> Result<(), TaggingError> {
        if !(-1.0..=1.0).contains(&self.delta) {
            return Err(TaggingError::InvalidParams(format!("delta {} outside [-1, 1]", self.delta)));
        }
        if self.max_candidates == 0 {
            return Err(TaggingError::InvalidParams("max_candidates must be positive".into()));
        }
        Ok(())
    }
}

/// Initial vocabulary plus the tags each pool-contributing dataset carries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagPool {
    pub vocab: Vocabulary,
    pub dataset_tags: BTreeMap<DatasetId, BTreeSet<String>>,
}

/// Seeds are records carrying platform tags; the canonical subset is the
/// remaining records with every unified field filled and a substantial
/// description.
pub fn split_pool_sources(records: &[DatasetRecord]) -> (Vec<&DatasetRecord>, Vec<&DatasetRecord>) {
    let mut seeds = Vec::new();
    let mut canon = Vec::new();
    for r in records.iter().filter(|r| r.is_visible()) {
        if !r.source_tags.is_empty() {
            seeds.push(r);
        } else if r.filled_field_count() == 6 && r.dataset_desc.chars().count() >= CANONICAL_MIN_DESC_CHARS {
            canon.push(r);
        }
    }
    (seeds, canon)
}

fn parse_topics(raw: &str) -> Result<Vec<String>, LmError> {
    let obj = parse_json_object(raw)?;
    let arr =
        obj.get("topics").and_then(Value::as_array).ok_or_else(|| LmError::malformed("missing topics array", raw))?;
    arr.iter()
        .map(|v| v.as_str().map(normalize_tag).ok_or_else(|| LmError::malformed("topic is not a string", raw)))
        .collect()
}

/// Union of the seeds' platform tags (optionally restricted to an
/// allow-list of verified labels) and language-model topics for each
/// canonical dataset.
pub fn build_tag_pool(
    seeds: &[&DatasetRecord],
    canonicals: &[&DatasetRecord],
    lm: &dyn LanguageModelClient,
    allow_list: Option<&BTreeSet<String>>,
    mode: ExecMode,
) -> Result<TagPool, TaggingError> {
    let mut pool = TagPool::default();
    let allow: Option<BTreeSet<String>> = allow_list.map(|a| a.iter().map(|t| normalize_tag(t)).collect());
    for r in seeds {
        let tags: BTreeSet<String> = r
            .source_tags
            .iter()
            .map(|t| normalize_tag(t))
            .filter(|t| !t.is_empty() && allow.as_ref().is_none_or(|a| a.contains(t)))
            .collect();
        for t in &tags {
            pool.vocab.insert(t, TagProvenance::Seed);
        }
        if !tags.is_empty() {
            pool.dataset_tags.entry(r.id.clone()).or_default().extend(tags);
        }
    }
    let topics = mode.map(canonicals, |r| -> Result<Vec<String>, LmError> {
        let req = PromptRequest::new(
            TemplateId::TopicGeneration,
            vars([("dataset_name", r.dataset_name.clone()), ("dataset_description", r.dataset_desc.clone())]),
        )?;
        parse_topics(&lm.complete(&req)?)
    });
    for (r, topics) in canonicals.iter().zip(topics) {
        let topics: BTreeSet<String> = topics?.into_iter().filter(|t| !t.is_empty()).collect();
        for t in &topics {
            pool.vocab.insert(t, TagProvenance::CanonicalGen);
        }
        if !topics.is_empty() {
            pool.dataset_tags.entry(r.id.clone()).or_default().extend(topics);
        }
    }
    Ok(pool)
}

/// Embeddings for dataset and tag nodes; rebuilt on load, never persisted.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingCache {
    pub datasets: HashMap<DatasetId, EmbeddingVector>,
    pub tags: HashMap<String, EmbeddingVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tag: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedTag {
    pub tag: String,
    pub is_new: bool,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagAssignment {
    pub dataset_id: DatasetId,
    pub selected: Vec<SelectedTag>,
    pub weakly_related: Vec<String>,
    pub discarded: Vec<String>,
    /// Labels absent from the vocabulary at refinement time.
    pub new_tags: Vec<String>,
}

impl TagAssignment {
    pub fn selected_labels(&self) -> Vec<String> {
        self.selected.iter().map(|s| s.tag.clone()).collect()
    }
}

fn label_list(obj: &serde_json::Map<String, Value>, key: &str, raw: &str) -> Result<Vec<String>, LmError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(normalize_tag(s)),
                Value::Object(o) => o
                    .get("tag")
                    .and_then(Value::as_str)
                    .map(normalize_tag)
                    .ok_or_else(|| LmError::malformed(format!("{key} entry without tag"), raw)),
                _ => Err(LmError::malformed(format!("{key} entry is not a string"), raw)),
            })
            .filter(|r| r.as_ref().map_or(true, |s| !s.is_empty()))
            .collect(),
        Some(_) => Err(LmError::malformed(format!("{key} is not an array"), raw)),
    }
}

/// Parses a refinement response. Selected tags take precedence over weakly
/// related ones, which take precedence over discarded ones, so the three
/// lists come out disjoint.
pub fn parse_refinement(dataset_id: &DatasetId, raw: &str, vocab: &Vocabulary) -> Result<TagAssignment, LmError> {
    let obj = parse_json_object(raw)?;
    let Some(Value::Array(sel)) = obj.get("selected") else {
        return Err(LmError::malformed("missing selected array", raw));
    };
    let mut selected = Vec::with_capacity(sel.len());
    for item in sel {
        let st = match item {
            Value::String(s) => SelectedTag { tag: normalize_tag(s), is_new: false, reason: String::new() },
            Value::Object(o) => SelectedTag {
                tag: o.get("tag").and_then(Value::as_str).map(normalize_tag).unwrap_or_default(),
                is_new: o.get("is_new").and_then(Value::as_bool).unwrap_or(false),
                reason: o.get("reason").and_then(Value::as_str).unwrap_or("").to_string(),
            },
            _ => return Err(LmError::malformed("selected entry is neither object nor string", raw)),
        };
        if st.tag.is_empty() {
            return Err(LmError::ContractViolation("selected tag is empty".into()));
        }
        selected.push(st);
    }
    if selected.len() != 2 {
        return Err(LmError::ContractViolation(format!(
            "selected must contain exactly two tags, got {}",
            selected.len()
        )));
    }
    if selected[0].tag == selected[1].tag {
        return Err(LmError::ContractViolation(format!("selected tag {:?} repeated", selected[0].tag)));
    }
    let mut taken: BTreeSet<String> = selected.iter().map(|s| s.tag.clone()).collect();
    let mut weak = Vec::new();
    for t in label_list(&obj, "weakly_related", raw)? {
        if taken.insert(t.clone()) {
            weak.push(t);
        }
    }
    let mut discarded = Vec::new();
    for t in label_list(&obj, "discarded", raw)? {
        if taken.insert(t.clone()) {
            discarded.push(t);
        }
    }
    let new_tags = selected.iter().map(|s| &s.tag).chain(&weak).filter(|t| !vocab.contains(t)).cloned().collect();
    Ok(TagAssignment { dataset_id: dataset_id.clone(), selected, weakly_related: weak, discarded, new_tags })
}

/// Renders the refinement prompt for `record` and parses the reply.
pub fn refine_tags(
    record: &DatasetRecord,
    candidates: &[Candidate],
    lm: &dyn LanguageModelClient,
    vocab: &Vocabulary,
) -> Result<TagAssignment, LmError> {
    let labels: Vec<&str> = candidates.iter().map(|c| c.tag.as_str()).collect();
    let req = PromptRequest::new(
        TemplateId::TagRefinement,
        vars([
            ("dataset_name", record.dataset_name.clone()),
            ("dataset_description", record.dataset_desc.clone()),
            ("candidate_tags", serde_json::to_string(&labels).expect("string list serializes")),
        ]),
    )?;
    parse_refinement(&record.id, &lm.complete(&req)?, vocab)
}

/// Vocabulary labels that occur as whole-token phrases in `text`.
fn phrase_matches<'a>(text: &str, tag_tokens: &'a [(String, Vec<String>)]) -> Vec<&'a str> {
    let toks = tokenize(text);
    let mut grams: HashSet<String> = HashSet::new();
    for n in 1..=MAX_PHRASE_TOKENS {
        for w in toks.windows(n) {
            grams.insert(w.join(" "));
        }
    }
    tag_tokens
        .iter()
        .filter(|(_, t)| !t.is_empty() && t.len() <= MAX_PHRASE_TOKENS && grams.contains(&t.join(" ")))
        .map(|(label, _)| label.as_str())
        .collect()
}

fn record_text(r: &DatasetRecord) -> String {
    unified_text(&r.dataset_name, &r.dataset_desc)
}

/// Vocabulary, tag graph and embedding cache, with the embedder used to
/// extend them. Recall only reads; `evolve` is the single writer.
pub struct Tagger {
    pub params: TagParams,
    pub vocab: Vocabulary,
    pub graph: TagGraph,
    cache: EmbeddingCache,
    embedder: Arc<dyn Embedder>,
    mode: ExecMode,
}

impl Tagger {
    /// Builds the initial graph over `datasets`. Each dataset's existing tags
    /// are its pool tags, platform tags and previously selected tags that are
    /// in the vocabulary. Tag pairs co-occur in a dataset when both are among
    /// its existing tags or appear as phrases in its text.
    pub fn build(
        datasets: &[DatasetRecord],
        pool: TagPool,
        params: TagParams,
        embedder: Arc<dyn Embedder>,
        mode: ExecMode,
    ) -> Result<Self, TaggingError> {
        params.validate()?;
        let TagPool { vocab, dataset_tags } = pool;
        let mut graph = TagGraph::new(params.delta, params.tau_co);
        for t in vocab.labels() {
            graph.add_tag(t);
        }
        let mut tagger = Self { params, vocab, graph, cache: EmbeddingCache::default(), embedder, mode };
        tagger.embed_tags()?;
        let texts: Vec<String> = datasets.iter().map(record_text).collect();
        let embs = tagger.embedder.embed_batch(&texts, mode)?;
        for (r, e) in datasets.iter().zip(embs) {
            tagger.graph.add_dataset(r.id.clone());
            tagger.cache.datasets.insert(r.id.clone(), e);
        }

        let tag_tokens: Vec<(String, Vec<String>)> =
            tagger.vocab.labels().map(|l| (l.to_string(), tokenize(l))).collect();
        let existing: Vec<BTreeSet<String>> = datasets
            .iter()
            .map(|r| {
                let mut s: BTreeSet<String> = dataset_tags.get(&r.id).cloned().unwrap_or_default();
                s.extend(r.source_tags.iter().chain(&r.tags_selected).map(|t| normalize_tag(t)));
                s.retain(|t| tagger.vocab.contains(t));
                s
            })
            .collect();
        let occurrences: Vec<Vec<String>> = mode.map_range(datasets.len(), |i| {
            let mut occ: BTreeSet<String> = existing[i].clone();
            occ.extend(phrase_matches(&texts[i], &tag_tokens).into_iter().map(str::to_string));
            occ.into_iter().collect()
        });
        for (i, r) in datasets.iter().enumerate() {
            for t in &existing[i] {
                tagger.graph.add_d2t(&r.id, t);
            }
            tagger.graph.record_occurrences(&r.id, occurrences[i].iter().map(String::as_str));
        }

        let ids: Vec<&DatasetId> = datasets.iter().map(|r| &r.id).collect();
        let embs: Vec<&EmbeddingVector> = ids.iter().map(|id| &tagger.cache.datasets[*id]).collect();
        let delta = params.delta;
        let edges = mode.flat_map_range(ids.len(), |i| {
            ((i + 1)..ids.len())
                .filter_map(|j| {
                    let c = embs[i].cosine(embs[j]);
                    (c >= delta && ids[i] != ids[j]).then_some((i, j, c))
                })
                .collect()
        });
        for (i, j, c) in edges {
            tagger.graph.add_d2d(ids[i], ids[j], c);
        }
        Ok(tagger)
    }

    /// Reassembles a tagger from persisted structure, re-embedding every
    /// node. Datasets missing from `records` keep their edges but are not
    /// used for on-the-fly neighbor search.
    pub fn restore(
        vocab: Vocabulary,
        graph: TagGraph,
        params: TagParams,
        records: &[DatasetRecord],
        embedder: Arc<dyn Embedder>,
        mode: ExecMode,
    ) -> Result<Self, TaggingError> {
        params.validate()?;
        let mut tagger = Self { params, vocab, graph, cache: EmbeddingCache::default(), embedder, mode };
        tagger.embed_tags()?;
        let nodes: Vec<&DatasetRecord> = records.iter().filter(|r| tagger.graph.has_dataset(&r.id)).collect();
        let texts: Vec<String> = nodes.iter().map(|r| record_text(r)).collect();
        let embs = tagger.embedder.embed_batch(&texts, mode)?;
        for (r, e) in nodes.iter().zip(embs) {
            tagger.cache.datasets.insert(r.id.clone(), e);
        }
        Ok(tagger)
    }

    fn embed_tags(&mut self) -> Result<(), EmbedError> {
        let missing: Vec<String> =
            self.graph.tags().filter(|t| !self.cache.tags.contains_key(*t)).map(str::to_string).collect();
        let embs = self.embedder.embed_batch(&missing, self.mode)?;
        self.cache.tags.extend(missing.into_iter().zip(embs));
        Ok(())
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    /// Embeds a batch of records ahead of annotation.
    pub fn prime(&mut self, records: &[DatasetRecord]) -> Result<(), EmbedError> {
        let todo: Vec<&DatasetRecord> = records.iter().filter(|r| !self.cache.datasets.contains_key(&r.id)).collect();
        let texts: Vec<String> = todo.iter().map(|r| record_text(r)).collect();
        let embs = self.embedder.embed_batch(&texts, self.mode)?;
        for (r, e) in todo.iter().zip(embs) {
            self.cache.datasets.insert(r.id.clone(), e);
        }
        Ok(())
    }

    fn dataset_embedding(&self, record: &DatasetRecord) -> Result<EmbeddingVector, EmbedError> {
        match self.cache.datasets.get(&record.id) {
            Some(e) => Ok(e.clone()),
            None => self.embedder.embed(&record_text(record)),
        }
    }

    pub fn tag_embedding(&self, tag: &str) -> Option<&EmbeddingVector> {
        self.cache.tags.get(tag)
    }

    /// Graph datasets whose embedding has cosine at least delta to `e_d`.
    fn similar_datasets(&self, id: &DatasetId, e_d: &EmbeddingVector) -> Vec<(DatasetId, f64)> {
        let nodes: Vec<&DatasetId> = self.graph.datasets().filter(|n| *n != id).collect();
        self.mode.filter_map(&nodes, |n| {
            let e = self.cache.datasets.get(*n)?;
            let c = e.cosine(e_d);
            (c >= self.params.delta).then(|| ((*n).clone(), c))
        })
    }

    /// Candidate tags for `record` from the D2T, D2D2T and T2T paths, ranked
    /// by cosine to the dataset embedding (ties by label) and capped at
    /// `max_candidates`.
    pub fn recall_candidates(&self, record: &DatasetRecord) -> Result<Vec<Candidate>, EmbedError> {
        let e_d = self.dataset_embedding(record)?;
        let cos = |t: &str| self.cache.tags.get(t).map_or(0.0, |e| e.cosine(&e_d));

        let tags: Vec<&str> = self.graph.tags().collect();
        let mut scored: Vec<(f64, &str)> = self.mode.map(&tags, |t| (cos(t), *t));
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let mut pool: BTreeSet<String> = scored.iter().take(self.params.k_dt).map(|(_, t)| t.to_string()).collect();

        let neighbors: Vec<DatasetId> = if self.graph.has_dataset(&record.id) {
            self.graph.d2d_neighbors(&record.id).map(|(n, _)| n.clone()).collect()
        } else {
            self.similar_datasets(&record.id, &e_d).into_iter().map(|(n, _)| n).collect()
        };
        for n in &neighbors {
            pool.extend(self.graph.dataset_tags(n).map(str::to_string));
        }

        let first: Vec<String> = pool.iter().cloned().collect();
        for t in &first {
            pool.extend(self.graph.t2t_neighbors(t).into_iter().map(|(n, _)| n));
        }

        let mut out: Vec<Candidate> = pool.into_iter().map(|tag| Candidate { cosine: cos(&tag), tag }).collect();
        out.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then_with(|| a.tag.cmp(&b.tag)));
        out.truncate(self.params.max_candidates);
        Ok(out)
    }

    /// Writes an assignment back: new labels join the vocabulary and graph,
    /// the dataset becomes a node with its D2D edges, D2T edges go to the
    /// selected tags, and the selected pair's co-occurrence is counted.
    pub fn evolve(&mut self, record: &DatasetRecord, assignment: &TagAssignment) -> Result<(), EmbedError> {
        for t in assignment.new_tags.iter().chain(assignment.selected.iter().map(|s| &s.tag)) {
            if self.vocab.insert(t, TagProvenance::LlmNew) {
                self.graph.add_tag(t);
            }
        }
        self.embed_tags()?;
        if !self.graph.has_dataset(&record.id) {
            let e_d = self.dataset_embedding(record)?;
            for (n, c) in self.similar_datasets(&record.id, &e_d) {
                self.graph.add_d2d(&record.id, &n, c);
            }
            self.graph.add_dataset(record.id.clone());
            self.cache.datasets.insert(record.id.clone(), e_d);
        }
        for s in &assignment.selected {
            self.graph.add_d2t(&record.id, &s.tag);
        }
        self.graph.record_occurrences(&record.id, assignment.selected.iter().map(|s| s.tag.as_str()));
        Ok(())
    }

    /// Recall, refine and evolve for one dataset.
    pub fn annotate(
        &mut self,
        record: &DatasetRecord,
        lm: &dyn LanguageModelClient,
    ) -> Result<TagAssignment, TaggingError> {
        let candidates = self.recall_candidates(record)?;
        let assignment = refine_tags(record, &candidates, lm, &self.vocab)?;
        self.evolve(record, &assignment)?;
        Ok(assignment)
    }

    /// Annotates records in order. Embeddings are computed up front in the
    /// configured execution mode; the annotate loop itself is sequential.
    pub fn annotate_all(
        &mut self,
        records: &[DatasetRecord],
        lm: &dyn LanguageModelClient,
    ) -> Result<Vec<TagAssignment>, TaggingError> {
        self.prime(records)?;
        records.iter().map(|r| self.annotate(r, lm)).collect()
    }

    /// Checks the graph constraints: D2D cosine at least delta (recomputed
    /// from the cache), T2T counts above tau_co, T2T symmetry, and D2T
    /// targets inside the vocabulary.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (a, b, _) in self.graph.d2d_edges() {
            if let (Some(ea), Some(eb)) = (self.cache.datasets.get(&a), self.cache.datasets.get(&b)) {
                let c = ea.cosine(eb);
                if c < self.params.delta {
                    return Err(format!("D2D edge {a}-{b} has cosine {c} < {}", self.params.delta));
                }
            }
        }
        let edges = self.graph.t2t_edges();
        let set: HashSet<(&str, &str)> = edges.iter().map(|(a, b, _)| (a.as_str(), b.as_str())).collect();
        for (a, b, c) in &edges {
            if *c <= self.params.tau_co {
                return Err(format!("T2T edge {a}-{b} has count {c} <= {}", self.params.tau_co));
            }
            if !set.contains(&(b.as_str(), a.as_str())) {
                return Err(format!("T2T edge {a}->{b} has no reverse"));
            }
        }
        for (d, t) in self.graph.d2t_edges() {
            if !self.vocab.contains(&t) {
                return Err(format!("D2T edge {d}->{t} targets a tag outside the vocabulary"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{FixtureEmbedder, HashedNgramEmbedder};
    use crate::lm::StubLm;

    fn rec(name: &str, desc: &str) -> DatasetRecord {
        DatasetRecord::new(name, desc, &format!("https://x.org/{}", name.replace(' ', "-")), "test")
    }

    fn hashed() -> Arc<dyn Embedder> {
        Arc::new(HashedNgramEmbedder::default())
    }

    #[test]
    fn pool_is_union_of_seed_tags() {
        let mut a = rec("a", "first");
        a.source_tags = vec!["A".into(), "b".into()];
        let mut b = rec("b", "second");
        b.source_tags = vec!["b".into(), "C".into()];
        let pool = build_tag_pool(&[&a, &b], &[], &StubLm::default(), None, ExecMode::Sequential).unwrap();
        assert_eq!(pool.vocab.labels().collect::<Vec<_>>(), vec!["a", "b", "c"]);

        let allow: BTreeSet<String> = ["c".to_string()].into();
        let pool = build_tag_pool(&[&a, &b], &[], &StubLm::default(), Some(&allow), ExecMode::Sequential).unwrap();
        assert_eq!(pool.vocab.labels().collect::<Vec<_>>(), vec!["c"]);
    }

    #[test]
    fn pool_topics_from_stub() {
        let c = rec("Forest Maps", "Aerial imagery of tree species with tree species labels for forest inventory.");
        let lm = StubLm::default();
        let pool = build_tag_pool(&[], &[&c], &lm, None, ExecMode::Sequential).unwrap();
        let expected = lm.distinctive_terms(&format!("{} {}", c.dataset_name, c.dataset_desc), 2, &BTreeSet::new());
        assert_eq!(pool.vocab.labels().map(str::to_string).collect::<BTreeSet<_>>(), expected.into_iter().collect());
        assert!(pool.vocab.contains("tree species"));
    }

    #[test]
    fn three_selected_is_contract_violation() {
        let raw = r#"{"selected":[{"tag":"a","is_new":false},{"tag":"b","is_new":false},{"tag":"c","is_new":false}],"weakly_related":[],"discarded":[]}"#;
        let err = parse_refinement(&DatasetId::new("d"), raw, &Vocabulary::new()).unwrap_err();
        assert!(matches!(err, LmError::ContractViolation(_)));
        let err = parse_refinement(&DatasetId::new("d"), "not json", &Vocabulary::new()).unwrap_err();
        assert!(matches!(err, LmError::MalformedResponse { .. }));
    }

    #[test]
    fn overlapping_lists_become_disjoint() {
        let raw = r#"{"selected":["a","b"],"weakly_related":["b","c"],"discarded":["c","d","a"]}"#;
        let mut v = Vocabulary::new();
        v.insert("a", TagProvenance::Seed);
        let a = parse_refinement(&DatasetId::new("d"), raw, &v).unwrap();
        assert_eq!(a.weakly_related, vec!["c"]);
        assert_eq!(a.discarded, vec!["d"]);
        assert_eq!(a.new_tags, vec!["b", "c"]);
    }

    #[test]
    fn empty_graph_recalls_nothing_and_stub_invents_two() {
        let t = Tagger::build(&[], TagPool::default(), TagParams::default(), hashed(), ExecMode::Sequential).unwrap();
        let d = rec("Road Scenes", "Annotated road scenes for lane detection and lane marking research.");
        assert!(t.recall_candidates(&d).unwrap().is_empty());
        let a = refine_tags(&d, &[], &StubLm::default(), &t.vocab).unwrap();
        assert_eq!(a.selected.len(), 2);
        assert!(a.selected.iter().all(|s| s.is_new));
        assert_eq!(a.new_tags.len(), 2);
    }

    #[test]
    fn identical_datasets_get_d2d_edge_and_neighbor_tags() {
        let mut a = rec("alpha", "Same text about glacier melt observations.");
        a.source_tags = vec!["glaciology".into()];
        let b = rec("alpha", "Same text about glacier melt observations.");
        let b = DatasetRecord { id: DatasetId::new("other"), ..b };
        let c = rec("zeta", "Stock prices of companies listed on exchanges.");
        let (seeds, _) = split_pool_sources(std::slice::from_ref(&a));
        let pool = build_tag_pool(&seeds, &[], &StubLm::default(), None, ExecMode::Sequential).unwrap();
        let params = TagParams { k_dt: 0, ..TagParams::default() };
        let t =
            Tagger::build(&[a.clone(), b.clone(), c.clone()], pool, params, hashed(), ExecMode::Sequential).unwrap();
        let edges = t.graph.d2d_edges();
        assert_eq!(edges.len(), 1);
        assert!((edges[0].2 - 1.0).abs() < 1e-9);
        let cands = t.recall_candidates(&b).unwrap();
        assert_eq!(cands.iter().map(|c| c.tag.as_str()).collect::<Vec<_>>(), vec!["glaciology"]);
        assert!(t.recall_candidates(&c).unwrap().is_empty());
    }

    #[test]
    fn evolve_grows_vocab_and_counts_pairs() {
        let mut t =
            Tagger::build(&[], TagPool::default(), TagParams::default(), hashed(), ExecMode::Sequential).unwrap();
        let assign = |id: &str, new: Vec<String>| TagAssignment {
            dataset_id: DatasetId::new(id),
            selected: vec![
                SelectedTag { tag: "x".into(), is_new: true, reason: String::new() },
                SelectedTag { tag: "y".into(), is_new: false, reason: String::new() },
            ],
            weakly_related: vec![],
            discarded: vec![],
            new_tags: new,
        };
        t.vocab.insert("y", TagProvenance::Seed);
        let d1 = rec("one", "first dataset");
        t.evolve(&d1, &assign("one", vec!["x".into()])).unwrap();
        assert_eq!(t.vocab.len(), 2);
        let d2 = rec("two", "second dataset");
        t.evolve(&d2, &assign("two", vec![])).unwrap();
        assert_eq!(t.vocab.len(), 2);
        assert_eq!(t.graph.cooccurrence("x", "y"), 2);
        t.check_invariants().unwrap();
    }

    #[test]
    fn off_topic_tag_is_discarded() {
        let desc = "Multi-sensor recordings of urban traffic for autonomous vehicles.";
        let d = rec("Urban Drive", desc);
        let text = unified_text(&d.dataset_name, &d.dataset_desc);
        let mut fx = FixtureEmbedder::new(256, hashed());
        fx.insert(text, vec![1.0, 0.0]).unwrap();
        for (tag, c) in [
            ("automatic driving", 0.82f64),
            ("pedestrian detection", 0.78),
            ("traffic perception", 0.61),
            ("adverse weather", 0.41),
        ] {
            fx.insert(tag, vec![c, (1.0 - c * c).sqrt()]).unwrap();
        }
        let emb: Arc<dyn Embedder> = Arc::new(fx);
        let mut pool = TagPool::default();
        for t in ["automatic driving", "pedestrian detection", "traffic perception", "adverse weather"] {
            pool.vocab.insert(t, TagProvenance::Seed);
        }
        let mut tagger = Tagger::build(&[], pool, TagParams::default(), emb.clone(), ExecMode::Sequential).unwrap();
        let lm = StubLm::new(emb);
        let cands = tagger.recall_candidates(&d).unwrap();
        assert_eq!(cands.len(), 4);
        let a = tagger.annotate(&d, &lm).unwrap();
        assert_eq!(a.selected_labels(), vec!["automatic driving", "pedestrian detection"]);
        assert_eq!(a.weakly_related, vec!["traffic perception"]);
        assert_eq!(a.discarded, vec!["adverse weather"]);
        assert!(a.new_tags.is_empty());
        assert_eq!(tagger.vocab.len(), 4);
        let again = tagger.annotate(&d, &lm).unwrap();
        assert_eq!(again, a);
    }
}
