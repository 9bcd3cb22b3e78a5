//! Deterministic rule-based stand-in for a language model.
//!
//! Each template gets a fixed rule so that every pipeline stage can run and
//! be tested offline. The stub reads the request variables rather than the
//! rendered prompt; its output is a pure function of the request.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, OnceLock};

use regex::Regex;
use scraper::{ElementRef, Html, Node};
use serde_json::json;

use super::{LanguageModelClient, LmError, PromptRequest, TemplateId};
use crate::embed::{Embedder, HashedNgramEmbedder};
use crate::schema::unified_text;
use crate::text::{bigram_counts, is_stopword, tokenize};

/// Returned by summarization when there is nothing to summarize.
pub const NO_DATASETS_SENTINEL: &str = "No datasets found for this query.";

/// Cosine cut-offs used by the tag refinement rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubThresholds {
    /// Candidates at or above this cosine may be selected.
    pub select_min: f64,
    /// The third-ranked candidate is weakly related at or above this cosine.
    pub weak_min: f64,
}

impl Default for StubThresholds {
    fn default() -> Self {
        Self { select_min: 0.3, weak_min: 0.5 }
    }
}

pub struct StubLm {
    embedder: Arc<dyn Embedder>,
    thresholds: StubThresholds,
    /// Bigram document frequencies for TF-IDF term picking.
    bigram_df: HashMap<String, u32>,
    n_docs: u32,
}

impl Default for StubLm {
    fn default() -> Self {
        Self::new(Arc::new(HashedNgramEmbedder::default()))
    }
}

fn dataset_cue() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(introduce|release|propose|present)s?\b.{0,80}\b(dataset|benchmark|corpus)").unwrap()
    })
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"https?://[^\s<>"'()\[\]]+"#).unwrap())
}

impl StubLm {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self { embedder, thresholds: StubThresholds::default(), bigram_df: HashMap::new(), n_docs: 0 }
    }

    pub fn with_thresholds(mut self, thresholds: StubThresholds) -> Self {
        self.thresholds = thresholds;
        self
    }

    /// Document frequencies for bigram TF-IDF; without a corpus every bigram
    /// has the same IDF and selection is by term frequency.
    pub fn with_corpus<'a>(mut self, docs: impl IntoIterator<Item = &'a str>) -> Self {
        self.bigram_df.clear();
        self.n_docs = 0;
        for doc in docs {
            self.n_docs += 1;
            for bg in bigram_counts(doc).into_keys() {
                *self.bigram_df.entry(bg).or_insert(0) += 1;
            }
        }
        self
    }

    fn var<'a>(req: &'a PromptRequest, name: &str) -> &'a str {
        req.vars.get(name).map(String::as_str).unwrap_or("")
    }

    /// Highest TF-IDF content bigrams, then content unigrams, best first.
    pub fn distinctive_terms(&self, text: &str, n: usize, exclude: &BTreeSet<String>) -> Vec<String> {
        let idf = |bg: &str| {
            let df = f64::from(self.bigram_df.get(bg).copied().unwrap_or(0));
            ((1.0 + f64::from(self.n_docs)) / (1.0 + df)).ln() + 1.0
        };
        let mut scored: Vec<(f64, String)> =
            bigram_counts(text).into_iter().map(|(bg, tf)| (f64::from(tf) * idf(&bg), bg)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut out: Vec<String> = Vec::new();
        for (_, bg) in scored {
            if out.len() == n {
                return out;
            }
            if !exclude.contains(&bg) && !out.contains(&bg) {
                out.push(bg);
            }
        }
        let mut uni: HashMap<String, u32> = HashMap::new();
        for t in tokenize(text) {
            if t.chars().count() >= 3 && !is_stopword(&t) && !t.chars().all(char::is_numeric) {
                *uni.entry(t).or_insert(0) += 1;
            }
        }
        let mut uni: Vec<(u32, String)> = uni.into_iter().map(|(t, c)| (c, t)).collect();
        uni.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        for (_, t) in uni {
            if out.len() == n {
                break;
            }
            if !exclude.contains(&t) && !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }

    fn describe(&self, req: &PromptRequest) -> String {
        largest_text_block(Self::var(req, "html_content")).map(|block| first_sentences(&block, 2)).unwrap_or_default()
    }

    fn extract(&self, req: &PromptRequest) -> String {
        let text = Self::var(req, "record_text");
        let Some(m) = dataset_cue().find(text) else {
            return json!({
                "is_dataset": "No",
                "dataset_name": "",
                "dataset_desc": "",
                "dataset_url": "",
                "analysis": "no dataset release cue found",
            })
            .to_string();
        };
        let caps = dataset_cue().captures(&text[m.start()..]).expect("matched above");
        let verb_end = m.start() + caps.get(1).unwrap().end();
        let kw = caps.get(2).unwrap();
        let kw_start = m.start() + kw.start();
        let kw_end = m.start() + kw.end();
        let name = capitalized_runs(&text[verb_end..kw_start])
            .pop()
            .or_else(|| {
                let tail: String = text[kw_end..].chars().take(80).collect();
                capitalized_runs(&tail).into_iter().next()
            })
            .unwrap_or_default();
        let url = url_re()
            .find(text)
            .map(|u| u.as_str().trim_end_matches(['.', ',', ';', ':']).to_string())
            .unwrap_or_default();
        json!({
            "is_dataset": "Yes",
            "dataset_name": name,
            "dataset_desc": sentence_around(text, m.start()),
            "dataset_url": url,
            "analysis": format!("release cue: {:?}", m.as_str()),
        })
        .to_string()
    }

    fn refine(&self, req: &PromptRequest) -> Result<String, LmError> {
        let name = Self::var(req, "dataset_name");
        let desc = Self::var(req, "dataset_description");
        let raw_candidates = Self::var(req, "candidate_tags");
        let candidates: Vec<String> = serde_json::from_str(raw_candidates)
            .map_err(|e| LmError::malformed(format!("candidate_tags: {e}"), raw_candidates))?;
        let embed_err = |e: crate::embed::EmbedError| LmError::Transport(e.to_string());
        let e_d = self.embedder.embed(&unified_text(name, desc)).map_err(embed_err)?;
        let mut ranked: Vec<(f64, String)> = Vec::with_capacity(candidates.len());
        for c in candidates {
            let cos = self.embedder.embed(&c).map_err(embed_err)?.cosine(&e_d);
            ranked.push((cos, c));
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

        let mut selected = Vec::new();
        for (cos, tag) in ranked.iter().take(2) {
            if *cos >= self.thresholds.select_min {
                selected.push(json!({
                    "tag": tag,
                    "is_new": false,
                    "reason": format!("similarity {cos:.3}"),
                }));
            }
        }
        let n_existing = selected.len();
        if n_existing < 2 {
            let exclude: BTreeSet<String> = ranked.iter().map(|(_, t)| t.clone()).collect();
            let mut fresh = self.distinctive_terms(&format!("{name} {desc}"), 2 - n_existing, &exclude);
            for filler in ["general data", "miscellaneous"] {
                if fresh.len() + n_existing < 2 && !exclude.contains(filler) && !fresh.iter().any(|f| f == filler) {
                    fresh.push(filler.to_string());
                }
            }
            for tag in fresh {
                selected.push(json!({ "tag": tag, "is_new": true, "reason": "candidates insufficient" }));
            }
        }
        let mut weak = Vec::new();
        let mut discarded = Vec::new();
        for (rank, (cos, tag)) in ranked.iter().enumerate() {
            if rank < n_existing {
                continue;
            }
            if rank == 2 && n_existing == 2 && *cos >= self.thresholds.weak_min {
                weak.push(tag.clone());
            } else {
                discarded.push(tag.clone());
            }
        }
        Ok(json!({ "selected": selected, "weakly_related": weak, "discarded": discarded }).to_string())
    }

    fn summarize(&self, req: &PromptRequest) -> String {
        let names = |block: &str| -> Vec<String> {
            block
                .lines()
                .filter_map(|l| {
                    let n = l.split(": ").next().unwrap_or("").trim();
                    (!n.is_empty()).then(|| n.to_string())
                })
                .collect()
        };
        let datasets = names(Self::var(req, "dataset_records"));
        if datasets.is_empty() {
            return NO_DATASETS_SENTINEL.to_string();
        }
        let query = Self::var(req, "user_query");
        let mut out = format!("Datasets relevant to \"{query}\" include {}.", join_names(&datasets));
        let providers = names(Self::var(req, "provider_info"));
        if !providers.is_empty() {
            out.push_str(&format!(" They are provided by {}.", join_names(&providers)));
        }
        out
    }

    fn topics(&self, req: &PromptRequest) -> String {
        let text = format!("{} {}", Self::var(req, "dataset_name"), Self::var(req, "dataset_description"));
        let topics = self.distinctive_terms(&text, 2, &BTreeSet::new());
        json!({ "topics": topics }).to_string()
    }
}

impl LanguageModelClient for StubLm {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, req: &PromptRequest) -> Result<String, LmError> {
        Ok(match req.template {
            TemplateId::DescriptionGeneration => self.describe(req),
            TemplateId::DatasetExtraction => self.extract(req),
            TemplateId::TagRefinement => self.refine(req)?,
            TemplateId::ResultSummarization => self.summarize(req),
            TemplateId::TopicGeneration => self.topics(req),
        })
    }
}

fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Runs of consecutive capitalized words (punctuation stripped), in order.
fn capitalized_runs(text: &str) -> Vec<String> {
    let mut runs = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    for word in text.split_whitespace() {
        let w = word.trim_matches(|c: char| !c.is_alphanumeric());
        let cap = w.chars().next().is_some_and(char::is_uppercase);
        if cap {
            cur.push(w.to_string());
        } else if !cur.is_empty() {
            runs.push(cur.join(" "));
            cur.clear();
        }
        // a trailing comma/period ends the run
        if cap && word.ends_with([',', '.', ';', ':']) {
            runs.push(cur.join(" "));
            cur.clear();
        }
    }
    if !cur.is_empty() {
        runs.push(cur.join(" "));
    }
    runs
}

fn sentence_bounds(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_end = iter.peek().is_none_or(|(_, n)| n.is_whitespace());
            if at_end {
                let end = i + c.len_utf8();
                out.push((start, end));
                start = end;
            }
        }
    }
    if !text[start..].trim().is_empty() {
        out.push((start, text.len()));
    }
    out
}

/// The first `n` sentences, trimmed and joined by single spaces.
pub(crate) fn first_sentences(text: &str, n: usize) -> String {
    sentence_bounds(text)
        .into_iter()
        .take(n)
        .map(|(s, e)| text[s..e].trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn sentence_around(text: &str, pos: usize) -> String {
    sentence_bounds(text)
        .into_iter()
        .find(|(s, e)| *s <= pos && pos < *e)
        .map(|(s, e)| text[s..e].trim().to_string())
        .unwrap_or_default()
}

const CHROME: &[&str] =
    &["nav", "header", "footer", "aside", "script", "style", "noscript", "form", "button", "menu", "head", "template"];
const LEAF_BLOCKS: &[&str] = &["p", "li", "td", "dd", "blockquote", "pre"];
const CONTAINER_BLOCKS: &[&str] = &["div", "section", "article", "main", "body"];

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn in_chrome(el: &ElementRef<'_>) -> bool {
    std::iter::once(**el)
        .chain(el.ancestors())
        .filter_map(|n| n.value().as_element().map(|e| e.name().to_string()))
        .any(|n| CHROME.contains(&n.as_str()))
}

fn full_text(el: &ElementRef<'_>) -> String {
    let mut out = String::new();
    for node in el.descendants() {
        if let Node::Text(t) = node.value() {
            let skip = node
                .ancestors()
                .take_while(|a| a.id() != el.id())
                .filter_map(|a| a.value().as_element().map(|e| e.name().to_string()))
                .any(|n| CHROME.contains(&n.as_str()));
            if !skip {
                out.push_str(t);
                out.push(' ');
            }
        }
    }
    collapse(&out)
}

fn own_text(el: &ElementRef<'_>) -> String {
    let mut out = String::new();
    for child in el.children() {
        if let Node::Text(t) = child.value() {
            out.push_str(t);
            out.push(' ');
        }
    }
    collapse(&out)
}

/// The longest block of body text outside navigation chrome; first wins on
/// ties. `None` when the page has no such text.
pub(crate) fn largest_text_block(html: &str) -> Option<String> {
    let doc = Html::parse_document(html);
    let mut best: Option<String> = None;
    for node in doc.tree.root().descendants() {
        let Some(el) = ElementRef::wrap(node) else { continue };
        let name = el.value().name();
        let text = if LEAF_BLOCKS.contains(&name) {
            if in_chrome(&el) {
                continue;
            }
            full_text(&el)
        } else if CONTAINER_BLOCKS.contains(&name) {
            if in_chrome(&el) {
                continue;
            }
            own_text(&el)
        } else {
            continue;
        };
        if text.is_empty() {
            continue;
        }
        if best.as_ref().is_none_or(|b| text.chars().count() > b.chars().count()) {
            best = Some(text);
        }
    }
    best
}
