//! Three-stage deduplication: explicit identifier matching, hash-based
//! blocking, and embedding similarity within blocks. Duplicate relations form
//! a graph whose connected components are dataset entities; each component
//! elects one canonical record.

mod components;
pub mod signature;

pub use components::{build_components, UnionFind};
pub use signature::{simhash, simhash_bands, HyperplaneLsh, TfIdfModel};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::embed::{EmbedError, Embedder, EmbeddingVector};
use crate::exec::ExecMode;
pub use crate::schema::unified_text;
use crate::schema::{normalize_name, DatasetId, DatasetRecord};

pub const DEFAULT_THETA: f64 = 0.85;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DedupError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("invalid dedup parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DedupParams {
    pub theta: f64,
    pub simhash_bands: usize,
    pub lsh_bands: usize,
    pub lsh_hyperplanes: usize,
    /// LSH bands also collide with buckets whose sign pattern differs in at
    /// most this many bits (0 or 1).
    pub lsh_probe_radius: u32,
    pub seed: u64,
}

impl Default for DedupParams {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            simhash_bands: 4,
            lsh_bands: 8,
            lsh_hyperplanes: 8,
            lsh_probe_radius: 1,
            seed: DEFAULT_SEED,
        }
    }
}

impl DedupParams {
    pub fn validate(&self) -> Result<(), DedupError> {
        let bad = |m: &str| Err(DedupError::InvalidParams(m.to_string()));
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must be in [0, 1]");
        }
        if self.simhash_bands == 0 || 64 % self.simhash_bands != 0 {
            return bad("simhash_bands must divide 64");
        }
        if self.lsh_bands == 0 || self.lsh_hyperplanes == 0 || self.lsh_hyperplanes > 64 {
            return bad("lsh_bands must be positive and lsh_hyperplanes in 1..=64");
        }
        if self.lsh_probe_radius > 1 {
            return bad("lsh_probe_radius must be 0 or 1");
        }
        Ok(())
    }

    pub fn lsh(&self) -> HyperplaneLsh {
        HyperplaneLsh { bands: self.lsh_bands, rows: self.lsh_hyperplanes, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextSignature {
    pub simhash: u64,
    /// LSH band values; empty when the text has no tokens.
    pub tfidf_sketch: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStage {
    Identifier,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupRelation {
    pub id_a: DatasetId,
    pub id_b: DatasetId,
    pub stage: MatchStage,
    pub score: f64,
}

impl DedupRelation {
    /// Orders the endpoints so that `id_a < id_b`.
    pub fn new(x: DatasetId, y: DatasetId, stage: MatchStage, score: f64) -> Self {
        let (id_a, id_b) = if x <= y { (x, y) } else { (y, x) };
        Self { id_a, id_b, stage, score }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupCluster {
    pub canonical_id: DatasetId,
    pub member_ids: BTreeSet<DatasetId>,
    /// URLs of non-canonical members that differ from the canonical URL.
    pub aliases: Vec<String>,
    pub min_score: f64,
    pub max_score: f64,
}

/// Pairs sharing a non-empty normalized name or a non-empty canonical URL.
/// Each unordered pair is reported once with score 1.0.
pub fn identifier_match(records: &[DatasetRecord]) -> Vec<DedupRelation> {
    let mut by_name: HashMap<String, Vec<usize>> = HashMap::new();
    let mut by_url: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let n = normalize_name(&r.dataset_name);
        if !n.is_empty() {
            by_name.entry(n).or_default().push(i);
        }
        if !r.dataset_url.is_empty() {
            by_url.entry(r.dataset_url.as_str()).or_default().push(i);
        }
    }
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for group in by_name.values().chain(by_url.values()) {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    pairs
        .into_iter()
        .filter(|(i, j)| records[*i].id != records[*j].id)
        .map(|(i, j)| DedupRelation::new(records[i].id.clone(), records[j].id.clone(), MatchStage::Identifier, 1.0))
        .collect()
}

/// Blocking signatures for every record, in input order.
pub fn signatures(records: &[DatasetRecord], params: &DedupParams, mode: ExecMode) -> Vec<TextSignature> {
    let texts: Vec<String> = records.iter().map(|r| unified_text(&r.dataset_name, &r.dataset_desc)).collect();
    let model = TfIdfModel::fit(texts.iter().map(String::as_str));
    let lsh = params.lsh();
    mode.map(&texts, |t| TextSignature {
        simhash: simhash(t, params.seed),
        tfidf_sketch: lsh.band_signatures(&model.vectorize(t)).unwrap_or_default(),
    })
}

/// Index pairs `(i, j)`, `i < j`, that share at least one SimHash band or
/// one LSH band, where LSH bands within `lsh_probe_radius` bits count as
/// shared. Records with empty text are never bucketed.
pub fn block_candidates(records: &[DatasetRecord], params: &DedupParams, mode: ExecMode) -> BTreeSet<(usize, usize)> {
    if records.len() < 2 {
        return BTreeSet::new();
    }
    let sigs = signatures(records, params, mode);
    // bucket key: (family, band index, band value)
    let mut buckets: HashMap<(u8, usize, u64), Vec<usize>> = HashMap::new();
    for (i, s) in sigs.iter().enumerate() {
        let text_empty = s.tfidf_sketch.is_empty();
        if s.simhash != 0 || !text_empty {
            for (b, v) in simhash_bands(s.simhash, params.simhash_bands).into_iter().enumerate() {
                buckets.entry((0, b, v)).or_default().push(i);
            }
        }
        for (b, v) in s.tfidf_sketch.iter().enumerate() {
            buckets.entry((1, b, *v)).or_default().push(i);
        }
    }
    let mut pairs = BTreeSet::new();
    for members in buckets.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    if params.lsh_probe_radius == 1 {
        let probed = mode.flat_map_range(sigs.len(), |i| {
            let mut out = Vec::new();
            for (b, v) in sigs[i].tfidf_sketch.iter().enumerate() {
                for bit in 0..params.lsh_hyperplanes {
                    if let Some(members) = buckets.get(&(1, b, v ^ (1 << bit))) {
                        out.extend(members.iter().filter(|&&j| j > i).map(|&j| (i, j)));
                    }
                }
            }
            out
        });
        pairs.extend(probed);
    }
    pairs
}

pub fn embed(text: &str, embedder: &dyn Embedder) -> Result<EmbeddingVector, DedupError> {
    Ok(embedder.embed(text)?)
}

/// Semantic relations for candidate pairs with cosine at or above `theta`.
pub fn semantic_match(
    records: &[DatasetRecord],
    embeddings: &[EmbeddingVector],
    candidates: &BTreeSet<(usize, usize)>,
    theta: f64,
    mode: ExecMode,
) -> Vec<DedupRelation> {
    let pairs: Vec<(usize, usize)> = candidates.iter().copied().collect();
    mode.filter_map(&pairs, |&(i, j)| {
        let score = embeddings[i].cosine(&embeddings[j]);
        (score >= theta && records[i].id != records[j].id)
            .then(|| DedupRelation::new(records[i].id.clone(), records[j].id.clone(), MatchStage::Semantic, score))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Election {
    pub canonical_id: DatasetId,
    pub aliases: Vec<String>,
}

/// Rank of a source in the priority list: earlier entries rank higher,
/// unlisted sources rank lowest.
fn priority_rank(source: &str, priority: &[String]) -> usize {
    priority.iter().position(|s| s == source).map_or(0, |p| priority.len() - p)
}

/// Elects the member maximizing (filled fields, source priority, description
/// length, smallest id).
pub fn select_canonical(
    members: &BTreeSet<DatasetId>,
    records: &HashMap<DatasetId, &DatasetRecord>,
    priority: &[String],
) -> Election {
    let key = |r: &DatasetRecord| {
        (
            r.filled_field_count(),
            priority_rank(&r.source_name, priority),
            r.dataset_desc.chars().count(),
            std::cmp::Reverse(r.id.clone()),
        )
    };
    let canonical = members
        .iter()
        .filter_map(|id| records.get(id).copied())
        .max_by_key(|r| key(r))
        .expect("cluster members must exist in the record set");
    let mut aliases: Vec<String> = members
        .iter()
        .filter(|id| **id != canonical.id)
        .filter_map(|id| records.get(id))
        .map(|r| r.dataset_url.clone())
        .filter(|u| !u.is_empty() && *u != canonical.dataset_url)
        .collect();
    aliases.sort();
    aliases.dedup();
    Election { canonical_id: canonical.id.clone(), aliases }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    pub relations: Vec<DedupRelation>,
    pub clusters: Vec<DedupCluster>,
    pub candidate_pairs: usize,
    pub input_len: usize,
}

impl DedupOutcome {
    /// |Γ(D)|: records that survive deduplication.
    pub fn surviving(&self) -> usize {
        self.input_len - self.clusters.iter().map(|c| c.member_ids.len() - 1).sum::<usize>()
    }

    /// duplicate id -> canonical id
    pub fn duplicate_map(&self) -> BTreeMap<DatasetId, DatasetId> {
        let mut m = BTreeMap::new();
        for c in &self.clusters {
            for id in &c.member_ids {
                if *id != c.canonical_id {
                    m.insert(id.clone(), c.canonical_id.clone());
                }
            }
        }
        m
    }
}

/// Runs the full pipeline over `records` and returns relations and clusters.
/// The caller applies the outcome (see `Store::apply_dedup`).
pub fn dedup_run(
    records: &[DatasetRecord],
    params: &DedupParams,
    embedder: &dyn Embedder,
    priority: &[String],
    mode: ExecMode,
) -> Result<DedupOutcome, DedupError> {
    params.validate()?;
    let mut relations = identifier_match(records);
    let candidates = block_candidates(records, params, mode);
    let texts: Vec<String> = records.iter().map(|r| unified_text(&r.dataset_name, &r.dataset_desc)).collect();
    let embeddings = embedder.embed_batch(&texts, mode)?;
    relations.extend(semantic_match(records, &embeddings, &candidates, params.theta, mode));

    let by_id: HashMap<DatasetId, &DatasetRecord> = records.iter().map(|r| (r.id.clone(), r)).collect();
    let mut clusters: Vec<DedupCluster> = build_components(&relations)
        .into_iter()
        .map(|members| {
            let e = select_canonical(&members, &by_id, priority);
            let (lo, hi) = relations
                .iter()
                .filter(|r| members.contains(&r.id_a))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.score), hi.max(r.score)));
            DedupCluster {
                canonical_id: e.canonical_id,
                member_ids: members,
                aliases: e.aliases,
                min_score: lo,
                max_score: hi,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.canonical_id.cmp(&b.canonical_id));
    Ok(DedupOutcome { relations, clusters, candidate_pairs: candidates.len(), input_len: records.len() })
}

/// One line per cluster: canonical id, member count, min and max score.
pub fn report_lines(clusters: &[DedupCluster]) -> Vec<String> {
    clusters
        .iter()
        .map(|c| format!("{}\t{}\t{:.4}\t{:.4}", c.canonical_id, c.member_ids.len(), c.min_score, c.max_score))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedNgramEmbedder;

    fn rec(name: &str, desc: &str, url: &str, src: &str) -> DatasetRecord {
        DatasetRecord::new(name, desc, url, src)
    }

    #[test]
    fn unified_text_examples() {
        assert_eq!(unified_text("A", "b c"), "a b c");
        assert_eq!(unified_text("A", ""), "a");
    }

    #[test]
    fn identifier_match_examples() {
        let r = vec![
            rec("Tiny_Imagenet", "x", "https://figshare.com/a", "figshare"),
            rec("Tiny ImageNet", "y", "https://paperswithcode.com/b", "pwc"),
        ];
        assert_eq!(identifier_match(&r).len(), 1);

        let r = vec![rec("a", "", "https://a.org/1", "s"), rec("b", "", "https://a.org/2", "s")];
        assert!(identifier_match(&r).is_empty());

        let r = vec![
            rec("x", "", "https://a.org/same", "s1"),
            rec("y", "", "https://a.org/same", "s2"),
            rec("z", "", "https://a.org/same", "s3"),
        ];
        let rel = identifier_match(&r);
        assert_eq!(rel.len(), 3);
        assert!(rel.iter().all(|r| r.id_a < r.id_b && r.stage == MatchStage::Identifier));
    }

    #[test]
    fn single_record_has_no_candidates() {
        let r = vec![rec("a", "b", "https://a.org", "s")];
        assert!(block_candidates(&r, &DedupParams::default(), ExecMode::Sequential).is_empty());
    }

    #[test]
    fn near_identical_pair_is_blocked_together() {
        let r = vec![
            rec(
                "City Scenes",
                "Urban street scenes with pixel level annotations for 30 classes.",
                "https://a.org/1",
                "s",
            ),
            rec(
                "City-Scenes",
                "Urban street scenes with pixel-level annotations for 30 classes",
                "https://b.org/2",
                "t",
            ),
            rec("Protein Atlas", "Subcellular localization images of human proteins.", "https://c.org/3", "u"),
        ];
        let c = block_candidates(&r, &DedupParams::default(), ExecMode::Sequential);
        assert!(c.contains(&(0, 1)));
    }

    #[test]
    fn unrelated_single_words_not_blocked() {
        let r = vec![rec("zebra", "", "https://a.org/1", "s"), rec("quantum", "", "https://b.org/2", "t")];
        let c = block_candidates(&r, &DedupParams::default(), ExecMode::Sequential);
        assert!(c.is_empty(), "{c:?}");
    }

    #[test]
    fn semantic_threshold() {
        let r = vec![rec("a", "", "", "s"), rec("b", "", "", "s")];
        let e0 = EmbeddingVector::from_raw(vec![1.0, 0.0]);
        let at = |c: f64| EmbeddingVector::from_raw(vec![c, (1.0 - c * c).sqrt()]);
        let cands: BTreeSet<(usize, usize)> = [(0, 1)].into();
        let m = semantic_match(&r, &[e0.clone(), at(0.89)], &cands, 0.85, ExecMode::Sequential);
        assert_eq!(m.len(), 1);
        assert!((m[0].score - 0.89).abs() < 1e-12);
        assert!(semantic_match(&r, &[e0, at(0.80)], &cands, 0.85, ExecMode::Sequential).is_empty());
    }

    #[test]
    fn exact_one_threshold_finds_nothing_for_distinct_texts() {
        let emb = HashedNgramEmbedder::default();
        let r = vec![
            rec("Alpha Set", "images of cats", "", "s"),
            rec("Alpha Set 2", "images of cats and dogs", "", "s"),
            rec("Beta", "sounds", "", "s"),
        ];
        let texts: Vec<String> = r.iter().map(|x| unified_text(&x.dataset_name, &x.dataset_desc)).collect();
        let e = emb.embed_batch(&texts, ExecMode::Sequential).unwrap();
        let all: BTreeSet<(usize, usize)> = [(0, 1), (0, 2), (1, 2)].into();
        assert!(semantic_match(&r, &e, &all, 1.0, ExecMode::Sequential).is_empty());
    }

    #[test]
    fn canonical_election_rules() {
        let mut full = rec("a", "desc", "https://a.org/1", "b_src");
        full.data_type = "image".into();
        full.scale = "1GB".into();
        let sparse = rec("a", "a much longer description here", "https://a.org/2", "a_src");
        let members: BTreeSet<DatasetId> = [full.id.clone(), sparse.id.clone()].into();
        let by_id: HashMap<DatasetId, &DatasetRecord> = [(full.id.clone(), &full), (sparse.id.clone(), &sparse)].into();
        let e = select_canonical(&members, &by_id, &[]);
        assert_eq!(e.canonical_id, full.id);
        assert_eq!(e.aliases, vec!["https://a.org/2".to_string()]);

        let a = rec("x", "same", "https://x.org/1", "A");
        let b = rec("x", "same", "https://x.org/2", "B");
        let members: BTreeSet<DatasetId> = [a.id.clone(), b.id.clone()].into();
        let by_id: HashMap<DatasetId, &DatasetRecord> = [(a.id.clone(), &a), (b.id.clone(), &b)].into();
        assert_eq!(select_canonical(&members, &by_id, &["A".into(), "B".into()]).canonical_id, a.id);
        assert_eq!(select_canonical(&members, &by_id, &["B".into(), "A".into()]).canonical_id, b.id);
        let smallest = a.id.clone().min(b.id.clone());
        assert_eq!(select_canonical(&members, &by_id, &[]).canonical_id, smallest);
    }

    #[test]
    fn dedup_run_counts_survivors() {
        let emb = HashedNgramEmbedder::default();
        let mut recs: Vec<DatasetRecord> = (0..7)
            .map(|i| {
                rec(
                    &format!("unique set {i}"),
                    &format!("topic number {i} with words {}", i * 37),
                    &format!("https://u.org/{i}"),
                    "s",
                )
            })
            .collect();
        recs.push(rec("Dup", "d1", "https://d.org/x", "s1"));
        recs.push(rec("dup", "d2", "https://d.org/y", "s2"));
        recs.push(rec("other", "d3", "https://d.org/x", "s3"));
        let out = dedup_run(&recs, &DedupParams::default(), &emb, &[], ExecMode::Sequential).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].member_ids.len(), 3);
        assert_eq!(out.surviving(), 8);

        let dup = out.duplicate_map();
        let survivors: Vec<DatasetRecord> = recs.into_iter().filter(|r| !dup.contains_key(&r.id)).collect();
        let again = dedup_run(&survivors, &DedupParams::default(), &emb, &[], ExecMode::Sequential).unwrap();
        assert!(again.relations.is_empty());
        assert_eq!(again.surviving(), survivors.len());
    }

    #[test]
    fn params_validation() {
        let p = DedupParams { simhash_bands: 5, ..DedupParams::default() };
        assert!(p.validate().is_err());
        let p = DedupParams { theta: 1.5, ..DedupParams::default() };
        assert!(p.validate().is_err());
    }
}
