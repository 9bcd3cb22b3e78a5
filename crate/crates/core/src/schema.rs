//! Unified dataset schema and the normalization that maps raw source records
//! onto it.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;
use url::Url;

/// A raw record: field name to text value. List-valued fields (tags,
/// keywords) are comma separated.
pub type FieldMap = BTreeMap<String, String>;

/// Descriptions shorter than this (in characters) are flagged for enrichment.
pub const DEFAULT_MIN_DESC_LEN: usize = 20;

pub const FIELD_NAME: &str = "dataset_name";
pub const FIELD_DESC: &str = "dataset_desc";
pub const FIELD_URL: &str = "dataset_url";
pub const FIELD_SOURCE: &str = "source_name";
pub const FIELD_TYPE: &str = "data_type";
pub const FIELD_SCALE: &str = "scale";
pub const FIELD_PROVIDER: &str = "provider";
pub const FIELD_TAGS: &str = "tags";

/// Content fields a raw record is expected to provide. `source_name` comes
/// from the source descriptor instead.
pub const RAW_FIELDS: [&str; 5] = [FIELD_NAME, FIELD_DESC, FIELD_URL, FIELD_TYPE, FIELD_SCALE];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("unparsable url: {0:?}")]
    UnparsableUrl(String),
    #[error("record has neither a dataset name nor a dataset url")]
    Unidentifiable,
}

/// Stable record identifier: 32 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetId(String);

impl DatasetId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    /// Content id over (source, canonical url, normalized name).
    pub fn derive(source_name: &str, canonical_url: &str, normalized_name: &str) -> Self {
        let mut h = Sha256::new();
        for part in [source_name, canonical_url, normalized_name] {
            h.update(part.as_bytes());
            h.update([0x1f]);
        }
        let digest = h.finalize();
        let hex: String = digest[..16].iter().map(|b| format!("{b:02x}")).collect();
        Self(hex)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DatasetId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Liveness {
    Alive,
    Dead,
    #[default]
    Unknown,
}

/// The unified dataset entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: DatasetId,
    pub dataset_name: String,
    pub dataset_desc: String,
    pub dataset_url: String,
    pub source_name: String,
    #[serde(default)]
    pub data_type: String,
    #[serde(default)]
    pub scale: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provider: String,
    /// Platform-native tags carried over from the source, if any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_tags: Vec<String>,
    #[serde(default)]
    pub tags_selected: Vec<String>,
    #[serde(default)]
    pub tags_weak: Vec<String>,
    #[serde(default)]
    pub alive: Liveness,
    /// Set on duplicates: the id of the elected canonical record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_of: Option<DatasetId>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl DatasetRecord {
    /// Minimal record for tests and synthetic corpora; the id is derived the
    /// same way ingestion derives it.
    pub fn new(name: &str, desc: &str, url: &str, source: &str) -> Self {
        let canon = canonicalize_url(url).unwrap_or_default();
        let id = DatasetId::derive(source, &canon, &normalize_name(name));
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        Self {
            id,
            dataset_name: name.to_string(),
            dataset_desc: desc.to_string(),
            dataset_url: canon,
            source_name: source.to_string(),
            data_type: String::new(),
            scale: String::new(),
            provider: String::new(),
            source_tags: Vec::new(),
            tags_selected: Vec::new(),
            tags_weak: Vec::new(),
            alive: Liveness::Unknown,
            canonical_of: None,
            created_at: epoch,
            updated_at: epoch,
        }
    }

    /// Searchable and navigable: not a duplicate and not on a dead site.
    pub fn is_visible(&self) -> bool {
        self.alive != Liveness::Dead && self.canonical_of.is_none()
    }

    /// Number of non-empty unified fields (name, desc, url, source, type, scale).
    pub fn filled_field_count(&self) -> usize {
        [&self.dataset_name, &self.dataset_desc, &self.dataset_url, &self.source_name, &self.data_type, &self.scale]
            .iter()
            .filter(|v| !v.trim().is_empty())
            .count()
    }

    /// Equality on everything an ingest adapter produces (ignores derived
    /// state and timestamps).
    pub fn same_source_content(&self, other: &Self) -> bool {
        self.id == other.id
            && self.dataset_name == other.dataset_name
            && self.dataset_desc == other.dataset_desc
            && self.dataset_url == other.dataset_url
            && self.source_name == other.source_name
            && self.data_type == other.data_type
            && self.scale == other.scale
            && self.provider == other.provider
            && self.source_tags == other.source_tags
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub record_id: DatasetId,
    pub missing_fields: Vec<String>,
    pub enrichment_needed: bool,
    pub notes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionMode {
    #[default]
    Api,
    SiteCrawl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    #[default]
    OneTime,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    #[default]
    Site,
    Institution,
    Enterprise,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Site => "site",
            EntityKind::Institution => "institution",
            EntityKind::Enterprise => "enterprise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_name: String,
    #[serde(default)]
    pub acquisition_mode: AcquisitionMode,
    #[serde(default)]
    pub update_mode: UpdateMode,
    #[serde(default)]
    pub entity_kind: EntityKind,
}

impl SourceDescriptor {
    pub fn new(source_name: impl Into<String>) -> Self {
        Self {
            source_name: source_name.into(),
            acquisition_mode: AcquisitionMode::default(),
            update_mode: UpdateMode::default(),
            entity_kind: EntityKind::default(),
        }
    }
}

/// Maps source-specific field names onto unified field names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AliasTable(BTreeMap<String, String>);

impl Default for AliasTable {
    fn default() -> Self {
        let pairs = [
            ("title", FIELD_NAME),
            ("name", FIELD_NAME),
            ("dataset_name", FIELD_NAME),
            ("description", FIELD_DESC),
            ("desc", FIELD_DESC),
            ("abstract", FIELD_DESC),
            ("summary", FIELD_DESC),
            ("dataset_desc", FIELD_DESC),
            ("url", FIELD_URL),
            ("link", FIELD_URL),
            ("homepage", FIELD_URL),
            ("landing_page", FIELD_URL),
            ("dataset_url", FIELD_URL),
            ("type", FIELD_TYPE),
            ("modality", FIELD_TYPE),
            ("format", FIELD_TYPE),
            ("data_type", FIELD_TYPE),
            ("size", FIELD_SCALE),
            ("scale", FIELD_SCALE),
            ("provider", FIELD_PROVIDER),
            ("publisher", FIELD_PROVIDER),
            ("keywords", FIELD_TAGS),
            ("tags", FIELD_TAGS),
        ];
        Self(pairs.iter().map(|(a, f)| (a.to_string(), f.to_string())).collect())
    }
}

impl AliasTable {
    /// Default aliases overlaid with source-specific entries.
    pub fn with_overrides(extra: &BTreeMap<String, String>) -> Self {
        let mut t = Self::default();
        for (alias, field) in extra {
            t.0.insert(alias.to_lowercase(), field.clone());
        }
        t
    }

    /// Rename every known alias to its unified field. When several aliases
    /// map to the same field, the first non-empty value in key order wins,
    /// except that an exact unified name always takes precedence.
    pub fn resolve(&self, raw: &FieldMap) -> FieldMap {
        let mut out = FieldMap::new();
        for (key, value) in raw {
            let value = value.trim();
            if value.is_empty() {
                continue;
            }
            let lk = key.to_lowercase();
            let Some(field) = self.0.get(&lk) else { continue };
            let exact = lk == *field;
            match out.get(field) {
                Some(_) if !exact => {}
                _ => {
                    out.insert(field.clone(), value.to_string());
                }
            }
        }
        out
    }
}

/// Lowercased, diacritic-free, separator-collapsed form of a dataset name.
pub fn normalize_name(name: &str) -> String {
    let folded: String = name
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text representation used for signatures and embeddings: the normalized
/// name, a single space, then the description (no trailing space when the
/// description is empty).
pub fn unified_text(name: &str, desc: &str) -> String {
    let name = normalize_name(name);
    let desc = desc.trim();
    match (name.is_empty(), desc.is_empty()) {
        (_, true) => name,
        (true, false) => desc.to_string(),
        (false, false) => format!("{name} {desc}"),
    }
}

/// Canonical absolute URL: lowercase scheme and host, no default port, no
/// fragment, no trailing slash (except the bare root), query keys sorted.
pub fn canonicalize_url(raw: &str) -> Result<String, SchemaError> {
    let trimmed = raw.trim();
    let mut url = Url::parse(trimmed).map_err(|_| SchemaError::UnparsableUrl(raw.to_string()))?;
    if !url.has_host() || url.cannot_be_a_base() {
        return Err(SchemaError::UnparsableUrl(raw.to_string()));
    }
    url.set_fragment(None);
    // url already lowercases scheme/host and drops default ports for
    // special schemes
    let path = url.path().to_string();
    let stripped = path.trim_end_matches('/');
    if stripped.len() != path.len() {
        url.set_path(if stripped.is_empty() { "/" } else { stripped });
    }
    match url.query().map(str::to_string) {
        Some(q) if q.is_empty() => url.set_query(None),
        Some(q) => {
            let mut parts: Vec<&str> = q.split('&').filter(|p| !p.is_empty()).collect();
            parts.sort_by_key(|p| p.split('=').next().unwrap_or(""));
            if parts.is_empty() {
                url.set_query(None);
            } else {
                url.set_query(Some(&parts.join("&")));
            }
        }
        None => {}
    }
    Ok(url.to_string())
}

/// Turns raw field maps into unified records for one source.
#[derive(Debug, Clone)]
pub struct SchemaMapper {
    pub source: SourceDescriptor,
    pub aliases: AliasTable,
    pub min_desc_len: usize,
}

impl SchemaMapper {
    pub fn new(source: SourceDescriptor) -> Self {
        Self { source, aliases: AliasTable::default(), min_desc_len: DEFAULT_MIN_DESC_LEN }
    }

    pub fn with_aliases(mut self, aliases: AliasTable) -> Self {
        self.aliases = aliases;
        self
    }

    fn identity(&self, fields: &FieldMap) -> Result<(DatasetId, String, String), SchemaError> {
        let name = fields.get(FIELD_NAME).map(String::as_str).unwrap_or("");
        let url = fields.get(FIELD_URL).map(String::as_str).unwrap_or("");
        if name.trim().is_empty() && url.trim().is_empty() {
            return Err(SchemaError::Unidentifiable);
        }
        let canon = if url.trim().is_empty() { String::new() } else { canonicalize_url(url)? };
        let norm = normalize_name(name);
        Ok((DatasetId::derive(&self.source.source_name, &canon, &norm), canon, norm))
    }

    pub fn validate(&self, raw: &FieldMap) -> Result<ValidationReport, SchemaError> {
        let fields = self.aliases.resolve(raw);
        let (record_id, _, _) = self.identity(&fields)?;
        let missing_fields: Vec<String> = RAW_FIELDS
            .iter()
            .filter(|f| fields.get(**f).is_none_or(|v| v.trim().is_empty()))
            .map(|f| f.to_string())
            .collect();
        let desc_len = fields.get(FIELD_DESC).map_or(0, |d| d.trim().chars().count());
        let desc_missing = missing_fields.iter().any(|f| f == FIELD_DESC);
        let enrichment_needed = desc_missing || desc_len < self.min_desc_len;
        let notes = if desc_missing {
            "description missing".to_string()
        } else if enrichment_needed {
            format!("description shorter than {} characters", self.min_desc_len)
        } else {
            String::new()
        };
        Ok(ValidationReport { record_id, missing_fields, enrichment_needed, notes })
    }

    pub fn to_unified(&self, raw: &FieldMap) -> Result<DatasetRecord, SchemaError> {
        self.to_unified_at(raw, Utc::now())
    }

    /// As [`to_unified`](Self::to_unified) with caller-supplied timestamps.
    pub fn to_unified_at(&self, raw: &FieldMap, now: DateTime<Utc>) -> Result<DatasetRecord, SchemaError> {
        let fields = self.aliases.resolve(raw);
        let (id, canon, _) = self.identity(&fields)?;
        let get = |k: &str| fields.get(k).cloned().unwrap_or_default();
        let source_tags = fields
            .get(FIELD_TAGS)
            .map(|t| {
                let mut tags: Vec<String> =
                    t.split(',').map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect();
                tags.dedup();
                tags
            })
            .unwrap_or_default();
        Ok(DatasetRecord {
            id,
            dataset_name: get(FIELD_NAME).split_whitespace().collect::<Vec<_>>().join(" "),
            dataset_desc: get(FIELD_DESC),
            dataset_url: canon,
            source_name: self.source.source_name.clone(),
            data_type: get(FIELD_TYPE),
            scale: get(FIELD_SCALE),
            provider: get(FIELD_PROVIDER),
            source_tags,
            tags_selected: Vec::new(),
            tags_weak: Vec::new(),
            alive: Liveness::Unknown,
            canonical_of: None,
            created_at: now,
            updated_at: now,
        })
    }
}
