//! Line-delimited JSON persistence for the catalog state.
//!
//! A store file is a sequence of tagged lines: a `meta` header, then
//! records, clusters, vocabulary entries, the tag graph, site states and
//! entity cards, closed by an `end` line carrying the number of lines before
//! it. A later `record` line with an id seen earlier replaces the earlier
//! version, so appending versions and replaying gives the latest state.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dedup::{DedupCluster, DedupOutcome};
use crate::linkhealth::{Gate, InspectionReport, SiteState};
use crate::schema::{DatasetId, DatasetRecord, Liveness};
use crate::search::{EntityCard, KnowledgeSpace};
use crate::tagging::{TagAssignment, TagGraph, TagProvenance, Vocabulary};

pub const STORE_FORMAT: &str = "datanav-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store unavailable at {path}: {source}")]
    Unavailable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
enum Line {
    Meta { format: String, version: u32, cycle: u64 },
    Record(DatasetRecord),
    Cluster(DedupCluster),
    Tag { label: String, provenance: TagProvenance },
    Graph(TagGraph),
    Site(SiteState),
    Entity(EntityCard),
    End { lines: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub inserted: usize,
    pub updated: usize,
    pub skipped: usize,
}

/// The whole persisted catalog state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Store {
    records: BTreeMap<DatasetId, DatasetRecord>,
    clusters: BTreeMap<DatasetId, DedupCluster>,
    pub vocab: Vocabulary,
    pub graph: Option<TagGraph>,
    pub sites: BTreeMap<String, SiteState>,
    pub knowledge: KnowledgeSpace,
    /// Number of completed link-health cycles.
    pub cycle: u64,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &DatasetId) -> Option<&DatasetRecord> {
        self.records.get(id)
    }

    /// All records in id order.
    pub fn records(&self) -> impl Iterator<Item = &DatasetRecord> {
        self.records.values()
    }

    pub fn records_vec(&self) -> Vec<DatasetRecord> {
        self.records.values().cloned().collect()
    }

    /// Records that are not duplicates, in id order.
    pub fn canonical_records(&self) -> Vec<DatasetRecord> {
        self.records.values().filter(|r| r.canonical_of.is_none()).cloned().collect()
    }

    pub fn clusters(&self) -> impl Iterator<Item = &DedupCluster> {
        self.clusters.values()
    }

    /// Upserts by id. A record whose adapter-produced content is unchanged
    /// is skipped; a changed one keeps its derived state (tags, liveness,
    /// duplicate link, creation time) and gets `updated_at = now`.
    pub fn ingest_batch(&mut self, records: Vec<DatasetRecord>, now: DateTime<Utc>) -> IngestCounts {
        let mut counts = IngestCounts::default();
        for mut r in records {
            match self.records.get_mut(&r.id) {
                None => {
                    self.records.insert(r.id.clone(), r);
                    counts.inserted += 1;
                }
                Some(old) if old.same_source_content(&r) => counts.skipped += 1,
                Some(old) => {
                    r.tags_selected = std::mem::take(&mut old.tags_selected);
                    r.tags_weak = std::mem::take(&mut old.tags_weak);
                    r.alive = old.alive;
                    r.canonical_of = old.canonical_of.take();
                    r.created_at = old.created_at;
                    r.updated_at = now;
                    *old = r;
                    counts.updated += 1;
                }
            }
        }
        counts
    }

    /// Marks duplicates and merges clusters. A previous canonical that is now
    /// a duplicate brings its cluster along, and its former members are
    /// re-pointed to the new canonical.
    pub fn apply_dedup(&mut self, outcome: &DedupOutcome) {
        for c in &outcome.clusters {
            let mut members = c.member_ids.clone();
            let (mut lo, mut hi) = (c.min_score, c.max_score);
            for id in &c.member_ids {
                if *id == c.canonical_id {
                    continue;
                }
                if let Some(old) = self.clusters.remove(id) {
                    members.extend(old.member_ids);
                    lo = lo.min(old.min_score);
                    hi = hi.max(old.max_score);
                }
            }
            if let Some(old) = self.clusters.remove(&c.canonical_id) {
                members.extend(old.member_ids);
                lo = lo.min(old.min_score);
                hi = hi.max(old.max_score);
            }
            for id in &members {
                if let Some(r) = self.records.get_mut(id) {
                    r.canonical_of = (*id != c.canonical_id).then(|| c.canonical_id.clone());
                }
            }
            let canon_url = self.records.get(&c.canonical_id).map(|r| r.dataset_url.clone()).unwrap_or_default();
            let mut aliases: Vec<String> = members
                .iter()
                .filter(|id| **id != c.canonical_id)
                .filter_map(|id| self.records.get(id))
                .map(|r| r.dataset_url.clone())
                .filter(|u| !u.is_empty() && *u != canon_url)
                .collect();
            aliases.sort();
            aliases.dedup();
            self.clusters.insert(
                c.canonical_id.clone(),
                DedupCluster {
                    canonical_id: c.canonical_id.clone(),
                    member_ids: members,
                    aliases,
                    min_score: lo,
                    max_score: hi,
                },
            );
        }
    }

    /// Writes tag partitions onto records. Unknown ids are ignored.
    pub fn apply_tags(&mut self, assignments: &[TagAssignment]) {
        for a in assignments {
            if let Some(r) = self.records.get_mut(&a.dataset_id) {
                r.tags_selected = a.selected_labels();
                r.tags_weak = a.weakly_related.clone();
            }
        }
    }

    /// Sets every record of an inspected site to the site's gate.
    pub fn apply_inspection(&mut self, report: &InspectionReport) {
        let gates: BTreeMap<&str, Gate> =
            report.sites.iter().map(|s| (s.source_name.as_str(), s.inspection.gate)).collect();
        for r in self.records.values_mut() {
            if let Some(g) = gates.get(r.source_name.as_str()) {
                r.alive = match g {
                    Gate::Alive => Liveness::Alive,
                    Gate::Dead => Liveness::Dead,
                };
            }
        }
        self.cycle = self.cycle.max(report.cycle);
    }

    /// Source name to the URLs of its canonical records, both sorted. Gated
    /// sites are included so they can be rechecked.
    pub fn site_urls(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in self.records.values() {
            if r.canonical_of.is_none() && !r.dataset_url.is_empty() {
                out.entry(r.source_name.clone()).or_default().push(r.dataset_url.clone());
            }
        }
        for urls in out.values_mut() {
            urls.sort();
            urls.dedup();
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let mut n = 0usize;
        let mut put = |w: &mut dyn Write, line: &Line| -> std::io::Result<()> {
            serde_json::to_writer(&mut *w, line)?;
            w.write_all(b"\n")?;
            n += 1;
            Ok(())
        };
        put(w, &Line::Meta { format: STORE_FORMAT.into(), version: STORE_VERSION, cycle: self.cycle })?;
        for r in self.records.values() {
            put(w, &Line::Record(r.clone()))?;
        }
        for c in self.clusters.values() {
            put(w, &Line::Cluster(c.clone()))?;
        }
        for label in self.vocab.labels() {
            let provenance = self.vocab.provenance(label).expect("label from vocabulary");
            put(w, &Line::Tag { label: label.to_string(), provenance })?;
        }
        if let Some(g) = &self.graph {
            put(w, &Line::Graph(g.clone()))?;
        }
        for s in self.sites.values() {
            put(w, &Line::Site(s.clone()))?;
        }
        for e in self.knowledge.iter() {
            put(w, &Line::Entity(e.clone()))?;
        }
        serde_json::to_writer(&mut *w, &Line::End { lines: n })?;
        w.write_all(b"\n")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, StoreError> {
        let mut store = Store::new();
        let mut seen_meta = false;
        let mut count = 0usize;
        let mut ended = false;
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            let corrupt = |reason: String| StoreError::Corrupt { line: lineno, reason };
            let line = line.map_err(|e| corrupt(e.to_string()))?;
            if ended {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(corrupt("content after end marker".into()));
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if !seen_meta && !matches!(parsed, Line::Meta { .. }) {
                return Err(corrupt("missing meta header".into()));
            }
            match parsed {
                Line::Meta { format, version, cycle } => {
                    if seen_meta {
                        return Err(corrupt("duplicate meta header".into()));
                    }
                    if format != STORE_FORMAT || version != STORE_VERSION {
                        return Err(corrupt(format!("unsupported format {format} v{version}")));
                    }
                    seen_meta = true;
                    store.cycle = cycle;
                }
                Line::Record(rec) => {
                    store.records.insert(rec.id.clone(), rec);
                }
                Line::Cluster(c) => {
                    store.clusters.insert(c.canonical_id.clone(), c);
                }
                Line::Tag { label, provenance } => {
                    store.vocab.insert(&label, provenance);
                }
                Line::Graph(g) => store.graph = Some(g),
                Line::Site(s) => {
                    store.sites.insert(s.source_name.clone(), s);
                }
                Line::Entity(e) => store.knowledge.upsert(e),
                Line::End { lines } => {
                    if lines != count {
                        return Err(corrupt(format!("end marker counts {lines} lines, found {count}")));
                    }
                    ended = true;
                }
            }
            count += 1;
        }
        if !ended {
            return Err(StoreError::Corrupt { line: count + 1, reason: "missing end marker (truncated file?)".into() });
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let f =
            std::fs::File::open(path).map_err(|source| StoreError::Unavailable { path: path.to_path_buf(), source })?;
        Self::read_from(BufReader::new(f))
    }

    /// Loads `path`, or returns an empty store when it does not exist.
    pub fn load_or_default(path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    /// Writes to a sibling temporary file and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let unavailable = |source| StoreError::Unavailable { path: path.to_path_buf(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(unavailable)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let f = std::fs::File::create(&tmp).map_err(unavailable)?;
            let mut w = BufWriter::new(f);
            self.write_to(&mut w).map_err(unavailable)?;
            w.flush().map_err(unavailable)?;
            w.get_ref().sync_all().map_err(unavailable)?;
        }
        std::fs::rename(&tmp, path).map_err(unavailable)
    }
}
