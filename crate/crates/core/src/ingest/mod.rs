//! Source adapters: structured record dumps, HTML pages with JSON-LD, and
//! unstructured text run through language-model extraction.

mod jsonld;

pub use jsonld::{extract_jsonld, extract_jsonld_with_stats, JsonLdExtraction};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::exec::ExecMode;
use crate::lm::{parse_json_object, vars, LanguageModelClient, LmError, PromptRequest, TemplateId};
use crate::schema::{
    AliasTable, DatasetRecord, FieldMap, SchemaMapper, SourceDescriptor, FIELD_DESC, FIELD_NAME, FIELD_URL,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("adapter failure on {path}: {reason}")]
    AdapterFailure { path: PathBuf, reason: String },
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error(transparent)]
    Lm(#[from] LmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IsDataset {
    Yes,
    No,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub is_dataset: IsDataset,
    pub dataset_name: String,
    pub dataset_desc: String,
    pub dataset_url: String,
    pub analysis: String,
}

const EXTRACTION_FIELDS: [&str; 5] = ["is_dataset", "dataset_name", "dataset_desc", "dataset_url", "analysis"];

/// Parses an extraction reply. The object must carry exactly the five
/// fields, all strings. A `No` verdict clears the dataset fields.
pub fn parse_extraction(raw: &str) -> Result<ExtractionResult, LmError> {
    let obj = parse_json_object(raw)?;
    if obj.len() != EXTRACTION_FIELDS.len() || EXTRACTION_FIELDS.iter().any(|f| !obj.contains_key(*f)) {
        let keys: Vec<&String> = obj.keys().collect();
        return Err(LmError::malformed(format!("expected fields {EXTRACTION_FIELDS:?}, got {keys:?}"), raw));
    }
    let field = |k: &str| -> Result<String, LmError> {
        obj[k]
            .as_str()
            .map(|s| s.trim().to_string())
            .ok_or_else(|| LmError::malformed(format!("{k} is not a string"), raw))
    };
    let is_dataset = match field("is_dataset")?.to_ascii_lowercase().as_str() {
        "yes" => IsDataset::Yes,
        "no" => IsDataset::No,
        "uncertain" => IsDataset::Uncertain,
        other => return Err(LmError::malformed(format!("is_dataset {other:?}"), raw)),
    };
    let mut out = ExtractionResult {
        is_dataset,
        dataset_name: field("dataset_name")?,
        dataset_desc: field("dataset_desc")?,
        dataset_url: field("dataset_url")?,
        analysis: field("analysis")?,
    };
    if is_dataset == IsDataset::No {
        out.dataset_name.clear();
        out.dataset_desc.clear();
        out.dataset_url.clear();
    }
    Ok(out)
}

pub fn extract_from_text(
    record_text: &str,
    source_hint: &str,
    lm: &dyn LanguageModelClient,
) -> Result<ExtractionResult, LmError> {
    let req = PromptRequest::new(
        TemplateId::DatasetExtraction,
        vars([("source_hint", source_hint.to_string()), ("record_text", record_text.to_string())]),
    )?;
    parse_extraction(&lm.complete(&req)?)
}

/// Description text from a dataset page. Empty client output is an error.
pub fn generate_description(
    dataset_url: &str,
    html_content: &str,
    lm: &dyn LanguageModelClient,
) -> Result<String, LmError> {
    let req = PromptRequest::new(
        TemplateId::DescriptionGeneration,
        vars([("dataset_url", dataset_url.to_string()), ("html_content", html_content.to_string())]),
    )?;
    let out = lm.complete(&req)?;
    if out.trim().is_empty() {
        return Err(LmError::malformed("empty description", out));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    RecordDump,
    HtmlPages,
    TextCorpus,
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::RecordDump => "record_dump",
            InputFormat::HtmlPages => "html_pages",
            InputFormat::TextCorpus => "text_corpus",
        })
    }
}

fn default_keywords() -> Vec<String> {
    ["dataset", "benchmark", "corpus"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceAdapterConfig {
    pub descriptor: SourceDescriptor,
    pub input_path: PathBuf,
    pub format: InputFormat,
    #[serde(default)]
    pub source_hint: String,
    /// Source-specific field aliases layered over the defaults.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    /// Text items must contain one of these (case-insensitive) to be sent
    /// to the extractor; empty disables the filter.
    #[serde(default = "default_keywords")]
    pub keywords: Vec<String>,
}

impl SourceAdapterConfig {
    pub fn new(source_name: &str, input_path: impl Into<PathBuf>, format: InputFormat) -> Self {
        Self {
            descriptor: SourceDescriptor::new(source_name),
            input_path: input_path.into(),
            format,
            source_hint: String::new(),
            aliases: BTreeMap::new(),
            keywords: default_keywords(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemError {
    pub item: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceRun {
    pub records: Vec<DatasetRecord>,
    pub errors: Vec<ItemError>,
    /// Items that were read but produced no record (non-datasets, pages
    /// without Dataset markup, keyword-filtered text).
    pub skipped: usize,
}

fn adapter_failure(path: &Path, reason: impl ToString) -> IngestError {
    IngestError::AdapterFailure { path: path.to_path_buf(), reason: reason.to_string() }
}

/// Files directly under `path` with one of `exts`, sorted; or `path` itself
/// when it is a file.
fn input_files(path: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, IngestError> {
    let meta = std::fs::metadata(path).map_err(|e| adapter_failure(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| adapter_failure(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn read(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|e| adapter_failure(path, e))
}

/// Scalar JSON values become strings; arrays are comma-joined; objects
/// contribute their `name`.
fn flatten(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => Some(items.iter().filter_map(flatten).collect::<Vec<_>>().join(", ")),
        Value::Object(o) => o.get("name").and_then(flatten),
    }
}

fn row_to_fields(row: &serde_json::Map<String, Value>) -> FieldMap {
    row.iter().filter_map(|(k, v)| flatten(v).map(|s| (k.clone(), s))).collect()
}

/// Rows of a record dump: a JSON array of objects, an object wrapping such
/// an array under `records` or `datasets`, or JSON Lines.
pub fn parse_dump(text: &str) -> Result<Vec<Result<FieldMap, String>>, String> {
    let trimmed = text.trim_start();
    let as_rows = |items: &[Value]| -> Vec<Result<FieldMap, String>> {
        items
            .iter()
            .enumerate()
            .map(|(i, v)| v.as_object().map(row_to_fields).ok_or_else(|| format!("row {i} is not an object")))
            .collect()
    };
    if trimmed.starts_with('[') {
        let v: Vec<Value> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        return Ok(as_rows(&v));
    }
    if let Ok(Value::Object(o)) = serde_json::from_str::<Value>(text) {
        for key in ["records", "datasets"] {
            if let Some(Value::Array(items)) = o.get(key) {
                return Ok(as_rows(items));
            }
        }
        return Ok(vec![Ok(row_to_fields(&o))]);
    }
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match serde_json::from_str::<Value>(l) {
            Ok(Value::Object(o)) => Ok(row_to_fields(&o)),
            Ok(_) => Err(format!("line {} is not an object", i + 1)),
            Err(e) => Err(format!("line {}: {e}", i + 1)),
        })
        .collect())
}

/// Text items: each `.txt` file of a directory is one item; a single file
/// is split on blank lines.
fn text_items(path: &Path) -> Result<Vec<(String, String)>, IngestError> {
    let meta = std::fs::metadata(path).map_err(|e| adapter_failure(path, e))?;
    if meta.is_dir() {
        return input_files(path, &["txt"])?.into_iter().map(|p| Ok((p.display().to_string(), read(&p)?))).collect();
    }
    let text = read(path)?;
    let mut items = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    let mut start = 1;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                items.push((format!("{}:{start}", path.display()), cur.join("\n")));
                cur.clear();
            }
            start = i + 2;
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        items.push((format!("{}:{start}", path.display()), cur.join("\n")));
    }
    Ok(items)
}

enum ItemOutcome {
    Records(Vec<DatasetRecord>),
    Skipped,
    Failed(String),
}

/// Runs one source adapter. Per-item problems are collected in the result;
/// only unreadable input fails the run. Records come back in input order.
pub fn run_source(
    cfg: &SourceAdapterConfig,
    lm: &dyn LanguageModelClient,
    now: DateTime<Utc>,
    mode: ExecMode,
) -> Result<SourceRun, IngestError> {
    let mapper = SchemaMapper::new(cfg.descriptor.clone()).with_aliases(AliasTable::with_overrides(&cfg.aliases));
    let items: Vec<(String, ItemOutcome)> = match cfg.format {
        InputFormat::RecordDump => {
            let mut out = Vec::new();
            for file in input_files(&cfg.input_path, &["json", "jsonl"])? {
                let rows = parse_dump(&read(&file)?).map_err(|e| adapter_failure(&file, e))?;
                for (i, row) in rows.into_iter().enumerate() {
                    let label = format!("{}#{}", file.display(), i);
                    let outcome = match row.and_then(|f| mapper.to_unified_at(&f, now).map_err(|e| e.to_string())) {
                        Ok(r) => ItemOutcome::Records(vec![r]),
                        Err(e) => ItemOutcome::Failed(e),
                    };
                    out.push((label, outcome));
                }
            }
            out
        }
        InputFormat::HtmlPages => {
            let files = input_files(&cfg.input_path, &["html", "htm"])?;
            let pages: Vec<(PathBuf, String)> =
                files.into_iter().map(|f| read(&f).map(|t| (f, t))).collect::<Result<_, _>>()?;
            mode.map(&pages, |(file, html)| (file.display().to_string(), html_page(&mapper, html, lm, now)))
        }
        InputFormat::TextCorpus => {
            let items = text_items(&cfg.input_path)?;
            let keywords: Vec<String> = cfg.keywords.iter().map(|k| k.to_lowercase()).collect();
            mode.map(&items, |(label, text)| {
                let lower = text.to_lowercase();
                if !keywords.is_empty() && !keywords.iter().any(|k| lower.contains(k.as_str())) {
                    return (label.clone(), ItemOutcome::Skipped);
                }
                (label.clone(), text_item(&mapper, text, &cfg.source_hint, lm, now))
            })
        }
    };
    let mut run = SourceRun::default();
    for (item, outcome) in items {
        match outcome {
            ItemOutcome::Records(rs) => run.records.extend(rs),
            ItemOutcome::Skipped => run.skipped += 1,
            ItemOutcome::Failed(message) => run.errors.push(ItemError { item, message }),
        }
    }
    Ok(run)
}

fn html_page(mapper: &SchemaMapper, html: &str, lm: &dyn LanguageModelClient, now: DateTime<Utc>) -> ItemOutcome {
    let maps = match extract_jsonld(html) {
        Ok(m) => m,
        Err(e) => return ItemOutcome::Failed(e.to_string()),
    };
    if maps.is_empty() {
        return ItemOutcome::Skipped;
    }
    let mut records = Vec::new();
    for mut fields in maps {
        let has_desc = fields.get(FIELD_DESC).is_some_and(|d| !d.trim().is_empty());
        if !has_desc {
            let url = fields.get(FIELD_URL).cloned().unwrap_or_default();
            match generate_description(&url, html, lm) {
                Ok(d) => {
                    fields.insert(FIELD_DESC.to_string(), d.trim().to_string());
                }
                Err(e) => return ItemOutcome::Failed(e.to_string()),
            }
        }
        match mapper.to_unified_at(&fields, now) {
            Ok(r) => records.push(r),
            Err(e) => return ItemOutcome::Failed(e.to_string()),
        }
    }
    ItemOutcome::Records(records)
}

fn text_item(
    mapper: &SchemaMapper,
    text: &str,
    hint: &str,
    lm: &dyn LanguageModelClient,
    now: DateTime<Utc>,
) -> ItemOutcome {
    let ex = match extract_from_text(text, hint, lm) {
        Ok(ex) => ex,
        Err(e) => return ItemOutcome::Failed(e.to_string()),
    };
    if ex.is_dataset != IsDataset::Yes {
        return ItemOutcome::Skipped;
    }
    let fields: FieldMap = [(FIELD_NAME, ex.dataset_name), (FIELD_DESC, ex.dataset_desc), (FIELD_URL, ex.dataset_url)]
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    match mapper.to_unified_at(&fields, now) {
        Ok(r) => ItemOutcome::Records(vec![r]),
        Err(e) => ItemOutcome::Failed(e.to_string()),
    }
}
