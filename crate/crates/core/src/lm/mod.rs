//! Language-model access: prompt templates, the client interface, the
//! deterministic stub used offline, and an HTTP client for real providers.

mod http;
mod stub;

pub use http::HttpLm;
pub use stub::{StubLm, StubThresholds, NO_DATASETS_SENTINEL};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub type Vars = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LmError {
    #[error("template {template} is missing variable {variable:?}")]
    MissingVariable { template: TemplateId, variable: String },
    #[error("malformed response ({reason}): {raw:?}")]
    MalformedResponse { reason: String, raw: String },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("language model transport error: {0}")]
    Transport(String),
}

impl LmError {
    pub fn malformed(reason: impl Into<String>, raw: impl Into<String>) -> Self {
        LmError::MalformedResponse { reason: reason.into(), raw: raw.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    DescriptionGeneration,
    DatasetExtraction,
    TagRefinement,
    ResultSummarization,
    TopicGeneration,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::DescriptionGeneration,
        TemplateId::DatasetExtraction,
        TemplateId::TagRefinement,
        TemplateId::ResultSummarization,
        TemplateId::TopicGeneration,
    ];

    /// The raw template text with `{placeholder}` markers.
    pub fn text(self) -> &'static str {
        match self {
            TemplateId::DescriptionGeneration => include_str!("../../templates/description_generation.txt"),
            TemplateId::DatasetExtraction => include_str!("../../templates/dataset_extraction.txt"),
            TemplateId::TagRefinement => include_str!("../../templates/tag_refinement.txt"),
            TemplateId::ResultSummarization => include_str!("../../templates/result_summarization.txt"),
            TemplateId::TopicGeneration => include_str!("../../templates/topic_generation.txt"),
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::DescriptionGeneration => "description_generation.txt",
            TemplateId::DatasetExtraction => "dataset_extraction.txt",
            TemplateId::TagRefinement => "tag_refinement.txt",
            TemplateId::ResultSummarization => "result_summarization.txt",
            TemplateId::TopicGeneration => "topic_generation.txt",
        }
    }

    pub fn variables(self) -> &'static [&'static str] {
        match self {
            TemplateId::DescriptionGeneration => &["dataset_url", "html_content"],
            TemplateId::DatasetExtraction => &["source_hint", "record_text"],
            TemplateId::TagRefinement => &["dataset_name", "dataset_description", "candidate_tags"],
            TemplateId::ResultSummarization => &["user_query", "dataset_records", "provider_info"],
            TemplateId::TopicGeneration => &["dataset_name", "dataset_description"],
        }
    }

    /// Variables that may be empty; a line whose placeholders are all empty
    /// optional variables is dropped from the rendered prompt.
    pub fn optional_variables(self) -> &'static [&'static str] {
        match self {
            TemplateId::ResultSummarization => &["provider_info"],
            _ => &[],
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name().trim_end_matches(".txt"))
    }
}

/// Placeholder names appearing in a line, in order. A placeholder is `{`
/// followed by `[a-z_]+` and `}`; any other brace is literal text.
fn placeholders(line: &str) -> Vec<(usize, usize, &str)> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                out.push((i, j + 1, &line[i + 1..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Substitutes every declared placeholder of `template`. Values are inserted
/// verbatim and never re-scanned.
pub fn render(template: TemplateId, vars: &Vars) -> Result<String, LmError> {
    let declared = template.variables();
    let optional = template.optional_variables();
    for name in declared {
        if !vars.contains_key(*name) && !optional.contains(name) {
            return Err(LmError::MissingVariable { template, variable: name.to_string() });
        }
    }
    let value = |name: &str| vars.get(name).map(String::as_str).unwrap_or("");
    let mut out = String::with_capacity(template.text().len());
    for line in template.text().split_inclusive('\n') {
        let marks: Vec<_> = placeholders(line).into_iter().filter(|(_, _, n)| declared.contains(n)).collect();
        if !marks.is_empty() && marks.iter().all(|(_, _, n)| optional.contains(n) && value(n).is_empty()) {
            continue;
        }
        let mut last = 0;
        for (start, end, name) in marks {
            out.push_str(&line[last..start]);
            out.push_str(value(name));
            last = end;
        }
        out.push_str(&line[last..]);
    }
    Ok(out)
}

/// One prompt: the template, its variables and the rendered text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRequest {
    pub template: TemplateId,
    pub vars: Vars,
    pub prompt: String,
}

impl PromptRequest {
    pub fn new(template: TemplateId, vars: Vars) -> Result<Self, LmError> {
        let prompt = render(template, &vars)?;
        Ok(Self { template, vars, prompt })
    }
}

/// Every language-model call in the pipeline goes through this trait.
pub trait LanguageModelClient: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &PromptRequest) -> Result<String, LmError>;
}

/// Parses a response that must be a single JSON object. A surrounding
/// markdown code fence is tolerated.
pub fn parse_json_object(raw: &str) -> Result<serde_json::Map<String, serde_json::Value>, LmError> {
    let mut body = raw.trim();
    if let Some(rest) = body.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        body = rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    match serde_json::from_str::<serde_json::Value>(body) {
        Ok(serde_json::Value::Object(map)) => Ok(map),
        Ok(_) => Err(LmError::malformed("expected a JSON object", raw)),
        Err(e) => Err(LmError::malformed(e.to_string(), raw)),
    }
}

pub fn vars<const N: usize>(pairs: [(&str, String); N]) -> Vars {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
