//! Pipeline stages applied to a [`Store`].

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use datanav_core::dedup::{dedup_run, DedupOutcome};
use datanav_core::embed::{Embedder, FixtureEmbedder, HashedNgramEmbedder, HttpEmbedder};
use datanav_core::ingest::{run_source, InputFormat, ItemError, SourceAdapterConfig};
use datanav_core::linkhealth::{run_inspection, HttpProber, InspectionReport, LinkProber};
use datanav_core::lm::{HttpLm, LanguageModelClient, StubLm};
use datanav_core::search::{Catalog, KnowledgeSpace};
use datanav_core::store::{IngestCounts, Store};
use datanav_core::tagging::{build_tag_pool, split_pool_sources, TagAssignment, Tagger};
use datanav_core::{DatasetRecord, ExecMode};
use serde::Serialize;

use crate::config::{Config, EmbeddingProvider, LmProvider};
use crate::AppError;

/// Configuration plus the language model and embedder it selects.
pub struct Engine {
    pub config: Config,
    pub lm: Arc<dyn LanguageModelClient>,
    pub embedder: Arc<dyn Embedder>,
    pub mode: ExecMode,
}

fn api_key(var: &Option<String>) -> Option<String> {
    var.as_ref().and_then(|v| std::env::var(v).ok())
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub source: String,
    pub format: InputFormat,
    #[serde(flatten)]
    pub counts: IngestCounts,
    /// Items read that produced no record.
    pub not_datasets: usize,
    pub errors: Vec<ItemError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TagSummary {
    pub annotated: usize,
    pub vocabulary: usize,
    pub assignments: Vec<TagAssignment>,
}

impl Engine {
    pub fn new(config: Config) -> Result<Self, AppError> {
        config.validate()?;
        let e = &config.embedding;
        let base: Arc<dyn Embedder> = match e.provider {
            EmbeddingProvider::Hashed => Arc::new(HashedNgramEmbedder::new(e.dim, 42)),
            EmbeddingProvider::External => Arc::new(HttpEmbedder::new(
                e.endpoint.clone(),
                e.model.clone(),
                e.dim,
                api_key(&e.api_key_env),
                Duration::from_secs_f64(e.timeout),
            )),
        };
        let embedder: Arc<dyn Embedder> = match &e.fixture {
            Some(path) => Arc::new(FixtureEmbedder::load(path, base).map_err(|err| AppError::Config(err.to_string()))?),
            None => base,
        };
        let lm: Arc<dyn LanguageModelClient> = match config.lm.provider {
            LmProvider::Stub => Arc::new(StubLm::new(embedder.clone())),
            LmProvider::External => Arc::new(HttpLm::new(
                config.lm.endpoint.clone(),
                config.lm.model.clone(),
                api_key(&config.lm.api_key_env),
                Duration::from_secs_f64(config.lm.timeout),
            )),
        };
        Ok(Self { config, lm, embedder, mode: ExecMode::default() })
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn ingest(
        &self,
        store: &mut Store,
        source: &str,
        input: &Path,
        format: Option<InputFormat>,
        now: DateTime<Utc>,
    ) -> Result<IngestSummary, AppError> {
        let format = match format {
            Some(f) => f,
            None => guess_format(input)?,
        };
        let mut cfg = SourceAdapterConfig::new(source, input, format);
        if let Some(aliases) = self.config.sources.aliases.get(source) {
            cfg.aliases = aliases.clone();
        }
        let run = run_source(&cfg, self.lm.as_ref(), now, self.mode)?;
        for e in &run.errors {
            tracing::warn!(item = %e.item, "skipped: {}", e.message);
        }
        let counts = store.ingest_batch(run.records, now);
        Ok(IngestSummary { source: source.to_string(), format, counts, not_datasets: run.skipped, errors: run.errors })
    }

    /// Deduplicates the surviving (canonical) records and folds the result
    /// into the store.
    pub fn dedup(&self, store: &mut Store, theta: Option<f64>) -> Result<DedupOutcome, AppError> {
        let mut params = self.config.dedup;
        if let Some(t) = theta {
            params.theta = t;
        }
        let records = store.canonical_records();
        let outcome = dedup_run(&records, &params, self.embedder.as_ref(), &self.config.sources.priority, self.mode)?;
        store.apply_dedup(&outcome);
        Ok(outcome)
    }

    /// Annotates every visible record that does not yet carry two selected
    /// tags. The tag graph is built on first use and extended afterwards.
    /// `allow_list` restricts which platform tags may seed the vocabulary.
    pub fn tag(&self, store: &mut Store, allow_list: Option<&BTreeSet<String>>) -> Result<TagSummary, AppError> {
        let records: Vec<DatasetRecord> = store.records().filter(|r| r.is_visible()).cloned().collect();
        let mut tagger = match store.graph.clone() {
            Some(graph) if !graph.is_empty() => Tagger::restore(
                store.vocab.clone(),
                graph,
                self.config.tagging,
                &records,
                self.embedder.clone(),
                self.mode,
            )?,
            _ => {
                let (seeds, canon) = split_pool_sources(&records);
                let mut pool = build_tag_pool(&seeds, &canon, self.lm.as_ref(), allow_list, self.mode)?;
                for label in store.vocab.labels() {
                    if let Some(p) = store.vocab.provenance(label) {
                        pool.vocab.insert(label, p);
                    }
                }
                let graph_set: Vec<DatasetRecord> = seeds.iter().chain(&canon).map(|r| (*r).clone()).collect();
                Tagger::build(&graph_set, pool, self.config.tagging, self.embedder.clone(), self.mode)?
            }
        };
        let todo: Vec<DatasetRecord> = records.into_iter().filter(|r| r.tags_selected.len() != 2).collect();
        let assignments = tagger.annotate_all(&todo, self.lm.as_ref())?;
        store.apply_tags(&assignments);
        store.vocab = tagger.vocab;
        store.graph = Some(tagger.graph);
        Ok(TagSummary { annotated: assignments.len(), vocabulary: store.vocab.len(), assignments })
    }

    /// One monitoring cycle with `budget` probes (the configured total when
    /// `None`), probing through `base_url` when given.
    pub fn linkcheck(
        &self,
        store: &mut Store,
        budget: Option<u64>,
        seed: Option<u64>,
        base_url: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<InspectionReport, AppError> {
        let probe = self.config.linkhealth.probe(base_url);
        let prober = HttpProber::new(&probe);
        self.linkcheck_with(store, &prober, &probe, budget, seed, now)
    }

    pub fn linkcheck_with(
        &self,
        store: &mut Store,
        prober: &dyn LinkProber,
        probe: &datanav_core::linkhealth::ProbeConfig,
        budget: Option<u64>,
        seed: Option<u64>,
        now: DateTime<Utc>,
    ) -> Result<InspectionReport, AppError> {
        let mut weights = self.config.linkhealth.weights();
        if let Some(b) = budget {
            weights.k_total = b;
        }
        let seed = seed.unwrap_or(self.config.linkhealth.seed);
        let sites = store.site_urls();
        let report = run_inspection(&sites, &mut store.sites, &weights, prober, probe, seed, store.cycle + 1, now)?;
        store.apply_inspection(&report);
        Ok(report)
    }

    /// Adds or replaces entity cards; returns how many were read.
    pub fn load_entities(&self, store: &mut Store, path: &Path) -> Result<usize, AppError> {
        let ks = KnowledgeSpace::load(path)?;
        let n = ks.len();
        for card in ks.iter() {
            store.knowledge.upsert(card.clone());
        }
        Ok(n)
    }

    /// A read-only search snapshot of the store.
    pub fn catalog(&self, store: &Store) -> Catalog {
        Catalog::build(
            &store.records_vec(),
            store.knowledge.clone(),
            store.vocab.clone(),
            self.config.search,
            self.mode,
        )
    }
}

/// Format from the file extension, or from the most common extension in a
/// directory.
pub fn guess_format(input: &Path) -> Result<InputFormat, AppError> {
    let of_ext = |p: &Path| -> Option<InputFormat> {
        match p.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" | "jsonl" => Some(InputFormat::RecordDump),
            "html" | "htm" => Some(InputFormat::HtmlPages),
            "txt" => Some(InputFormat::TextCorpus),
            _ => None,
        }
    };
    let unknown = || AppError::Usage(format!("cannot tell the input format of {}; pass --format", input.display()));
    if input.is_dir() {
        let mut counts = [0usize; 3];
        let entries = std::fs::read_dir(input).map_err(|e| AppError::Io(format!("{}: {e}", input.display())))?;
        for entry in entries.flatten() {
            match of_ext(&entry.path()) {
                Some(InputFormat::RecordDump) => counts[0] += 1,
                Some(InputFormat::HtmlPages) => counts[1] += 1,
                Some(InputFormat::TextCorpus) => counts[2] += 1,
                None => {}
            }
        }
        let formats = [InputFormat::RecordDump, InputFormat::HtmlPages, InputFormat::TextCorpus];
        let (best, n) = counts.iter().enumerate().max_by_key(|(i, n)| (**n, std::cmp::Reverse(*i))).unwrap();
        if *n == 0 {
            return Err(unknown());
        }
        Ok(formats[best])
    } else {
        of_ext(input).ok_or_else(unknown)
    }
}
