//! JSON HTTP API over a catalog snapshot.
//!
//! Reads go to an immutable [`Catalog`] behind an `Arc` that is swapped
//! whole after each admin mutation. Mutations are serialized by the writer
//! lock, run on a copy of the store, persist it, and only then publish the
//! new snapshot, so a failed mutation leaves both store and snapshot as they
//! were.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use datanav_core::dedup::report_lines;
use datanav_core::search::{exploration_gain, source_info, summarize, Catalog, EntityCard, ScoredHit, SearchError};
use datanav_core::store::Store;
use datanav_core::{DatasetId, DatasetRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::Engine;
use crate::AppError;

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_LIMIT: usize = 20;
pub const MAX_LIMIT: usize = 1000;

pub struct AppState {
    snapshot: RwLock<Arc<Catalog>>,
    writer: tokio::sync::Mutex<Store>,
    store_path: PathBuf,
    engine: Arc<Engine>,
    /// Rebase target for admin link checks that do not name one.
    probe_base_url: Option<String>,
}

impl AppState {
    pub fn new(engine: Engine, store: Store, store_path: PathBuf, probe_base_url: Option<String>) -> Self {
        let catalog = engine.catalog(&store);
        Self {
            snapshot: RwLock::new(Arc::new(catalog)),
            writer: tokio::sync::Mutex::new(store),
            store_path,
            engine: Arc::new(engine),
            probe_base_url,
        }
    }

    pub fn catalog(&self) -> Arc<Catalog> {
        self.snapshot.read().expect("snapshot lock").clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_param(name: &str, why: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_parameter", format!("{name}: {why}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match &e {
            SearchError::UnknownTag(_) => Self::new(StatusCode::NOT_FOUND, "unknown_tag", e.to_string()),
            SearchError::UnknownDataset(_) => Self::new(StatusCode::NOT_FOUND, "unknown_dataset", e.to_string()),
            SearchError::Lm(_) => Self::new(StatusCode::BAD_GATEWAY, "lm_failure", e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Usage(_) | AppError::Config(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_parameter", e.to_string())
            }
            AppError::Dedup(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_parameter", e.to_string()),
            AppError::Search(s) => s.into(),
            AppError::Lm(_) => Self::new(StatusCode::BAD_GATEWAY, "lm_failure", e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "pipeline_error", e.to_string()),
        }
    }
}

type Params = Query<HashMap<String, String>>;

fn param<T: FromStr>(q: &HashMap<String, String>, name: &str, default: T) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    match q.get(name) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|e| ApiError::bad_param(name, e)),
    }
}

#[derive(Debug, Clone, Copy)]
struct Page {
    offset: usize,
    limit: usize,
}

impl Page {
    fn from_query(q: &HashMap<String, String>) -> Result<Self, ApiError> {
        let offset = param(q, "offset", 0usize)?;
        let limit = param(q, "limit", DEFAULT_LIMIT)?;
        if limit == 0 || limit > MAX_LIMIT {
            return Err(ApiError::bad_param("limit", format!("must be between 1 and {MAX_LIMIT}")));
        }
        Ok(Self { offset, limit })
    }

    fn slice<'a, T>(&self, items: &'a [T]) -> &'a [T] {
        let start = self.offset.min(items.len());
        let end = (start + self.limit).min(items.len());
        &items[start..end]
    }
}

fn required_query(q: &HashMap<String, String>) -> Result<String, ApiError> {
    match q.get("q").map(|s| s.trim()) {
        Some(s) if !s.is_empty() => Ok(s.to_string()),
        _ => Err(ApiError::new(StatusCode::BAD_REQUEST, "missing_query", "query parameter q is required")),
    }
}

/// The card shape shared by every dataset list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetCard {
    pub id: DatasetId,
    pub name: String,
    pub desc: String,
    pub url: String,
    pub source: String,
    pub tags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl DatasetCard {
    fn of(r: &DatasetRecord, score: Option<f64>) -> Self {
        Self {
            id: r.id.clone(),
            name: r.dataset_name.clone(),
            desc: r.dataset_desc.clone(),
            url: r.dataset_url.clone(),
            source: r.source_name.clone(),
            tags: r.tags_selected.clone(),
            score,
        }
    }
}

fn hit_cards(cat: &Catalog, hits: &[ScoredHit]) -> Vec<DatasetCard> {
    hits.iter().filter_map(|h| cat.visible_record(&h.dataset_id).map(|r| DatasetCard::of(r, Some(h.score)))).collect()
}

async fn blocking<R, F>(f: F) -> Result<R, ApiError>
where
    F: FnOnce() -> Result<R, ApiError> + Send + 'static,
    R: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Value> {
    let cat = s.catalog();
    Json(json!({ "status": "ok", "indexed": cat.index.len() }))
}

async fn search(State(s): State<Arc<AppState>>, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let query = required_query(&q)?;
    let k = param(&q, "k", DEFAULT_K)?;
    if k == 0 || k > MAX_LIMIT {
        return Err(ApiError::bad_param("k", format!("must be between 1 and {MAX_LIMIT}")));
    }
    let page = Page::from_query(&q)?;
    let tag = q.get("tag").map(|t| t.trim().to_string()).filter(|t| !t.is_empty());
    let cat = s.catalog();
    let hits = match &tag {
        Some(t) => cat.refine_by_tag(&query, t, k)?,
        None => cat.search(&query, k),
    };
    let tag_counts: Vec<Value> =
        cat.index.tag_histogram(&hits).into_iter().map(|(tag, count)| json!({ "tag": tag, "count": count })).collect();
    Ok(Json(json!({
        "query": query,
        "tag": tag,
        "total": hits.len(),
        "offset": page.offset,
        "limit": page.limit,
        "hits": hit_cards(&cat, page.slice(&hits)),
        "tag_counts": tag_counts,
    })))
}

fn visible<'a>(cat: &'a Catalog, id: &DatasetId) -> Result<&'a DatasetRecord, ApiError> {
    match cat.record(id) {
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_dataset", format!("unknown dataset {id}"))),
        Some(r) if !r.is_visible() => Err(ApiError::new(
            StatusCode::GONE,
            "dataset_withheld",
            format!("dataset {id} is a duplicate or on an unreachable site"),
        )),
        Some(r) => Ok(r),
    }
}

async fn dataset(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let cat = s.catalog();
    let r = visible(&cat, &DatasetId::new(id))?;
    Ok(Json(json!({
        "id": r.id,
        "name": r.dataset_name,
        "desc": r.dataset_desc,
        "url": r.dataset_url,
        "source": r.source_name,
        "tags": r.tags_selected,
        "weak_tags": r.tags_weak,
        "data_type": r.data_type,
        "scale": r.scale,
        "provider": r.provider,
        "alive": r.alive,
        "entity": source_info(&r.source_name, &cat.knowledge),
    })))
}

/// Navigation from one dataset: the related datasets, the entity cards of
/// every source involved (the dataset's own first), and a summary.
async fn related(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Params,
) -> Result<Json<Value>, ApiError> {
    let page = Page::from_query(&q)?;
    let cat = s.catalog();
    let lm = s.engine.lm.clone();
    blocking(move || {
        let id = DatasetId::new(id);
        let r = visible(&cat, &id)?;
        let related: Vec<&DatasetRecord> = cat.navigate(&id)?.iter().filter_map(|n| cat.visible_record(n)).collect();
        let mut sources: Vec<&str> = vec![r.source_name.as_str()];
        for n in &related {
            if !sources.contains(&n.source_name.as_str()) {
                sources.push(&n.source_name);
            }
        }
        let entities: Vec<&EntityCard> = sources.iter().filter_map(|s| source_info(s, &cat.knowledge)).collect();
        let summary = summarize(&r.dataset_name, &[r], &related, &entities, lm.as_ref())?;
        let cards: Vec<DatasetCard> = related.iter().map(|n| DatasetCard::of(n, None)).collect();
        Ok(Json(json!({
            "id": r.id,
            "total": cards.len(),
            "offset": page.offset,
            "limit": page.limit,
            "related": page.slice(&cards),
            "entities": entities,
            "summary": summary,
        })))
    })
    .await
}

async fn entity(
    State(s): State<Arc<AppState>>,
    Path(source): Path<String>,
    Query(q): Params,
) -> Result<Json<Value>, ApiError> {
    let page = Page::from_query(&q)?;
    let cat = s.catalog();
    let card = source_info(&source, &cat.knowledge);
    let datasets: Vec<DatasetCard> =
        cat.datasets_of_source(&source).into_iter().map(|r| DatasetCard::of(r, None)).collect();
    if card.is_none() && datasets.is_empty() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_entity", format!("unknown source {source:?}")));
    }
    Ok(Json(json!({
        "source": source,
        "entity": card,
        "total": datasets.len(),
        "offset": page.offset,
        "limit": page.limit,
        "datasets": page.slice(&datasets),
    })))
}

async fn tag_datasets(
    State(s): State<Arc<AppState>>,
    Path(tag): Path<String>,
    Query(q): Params,
) -> Result<Json<Value>, ApiError> {
    let page = Page::from_query(&q)?;
    let cat = s.catalog();
    let datasets: Vec<DatasetCard> =
        cat.datasets_with_tag(&tag)?.into_iter().map(|r| DatasetCard::of(r, None)).collect();
    Ok(Json(json!({
        "tag": datanav_core::tagging::normalize_tag(&tag),
        "total": datasets.len(),
        "offset": page.offset,
        "limit": page.limit,
        "datasets": page.slice(&datasets),
    })))
}

async fn summary(State(s): State<Arc<AppState>>, Query(q): Params) -> Result<Json<Value>, ApiError> {
    let query = required_query(&q)?;
    let k = param(&q, "k", 10usize)?;
    if k == 0 || k > MAX_LIMIT {
        return Err(ApiError::bad_param("k", format!("must be between 1 and {MAX_LIMIT}")));
    }
    let cat = s.catalog();
    let lm = s.engine.lm.clone();
    blocking(move || {
        let bundle = cat.explore(&query, k, lm.as_ref())?;
        let gain = exploration_gain(bundle.initial.len(), bundle.related.len()).ok();
        Ok(Json(json!({
            "query": bundle.query,
            "summary": bundle.summary,
            "initial_count": bundle.initial.len(),
            "related_count": bundle.related.len(),
            "exploration_gain": gain,
            "entities": bundle.entities,
        })))
    })
    .await
}

fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.to_string()))
}

/// Runs `f` on a copy of the store under the writer lock, saves the copy,
/// then publishes it and a rebuilt snapshot.
async fn mutate<R, F>(s: Arc<AppState>, f: F) -> Result<R, ApiError>
where
    F: FnOnce(&Engine, &mut Store) -> Result<R, AppError> + Send + 'static,
    R: Send + 'static,
{
    let mut guard = s.writer.lock().await;
    let mut store = guard.clone();
    let engine = s.engine.clone();
    let path = s.store_path.clone();
    let (store, catalog, out) = blocking(move || {
        let out = f(&engine, &mut store)?;
        store.save(&path).map_err(AppError::from)?;
        let catalog = engine.catalog(&store);
        Ok((store, catalog, out))
    })
    .await?;
    *guard = store;
    *s.snapshot.write().expect("snapshot lock") = Arc::new(catalog);
    Ok(out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkcheckRequest {
    budget: Option<u64>,
    seed: Option<u64>,
    base_url: Option<String>,
}

async fn admin_linkcheck(State(s): State<Arc<AppState>>, bytes: Bytes) -> Result<Json<Value>, ApiError> {
    let req: LinkcheckRequest = body(&bytes)?;
    let base = req.base_url.or_else(|| s.probe_base_url.clone());
    let report = mutate(s, move |e, store| e.linkcheck(store, req.budget, req.seed, base, Utc::now())).await?;
    Ok(Json(json!({ "lines": report.lines(), "report": report })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DedupRequest {
    theta: Option<f64>,
}

async fn admin_dedup(State(s): State<Arc<AppState>>, bytes: Bytes) -> Result<Json<Value>, ApiError> {
    let req: DedupRequest = body(&bytes)?;
    let outcome = mutate(s, move |e, store| e.dedup(store, req.theta)).await?;
    Ok(Json(json!({
        "input": outcome.input_len,
        "candidate_pairs": outcome.candidate_pairs,
        "relations": outcome.relations.len(),
        "clusters": outcome.clusters.len(),
        "lines": report_lines(&outcome.clusters),
    })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagRequest {
    seed_tags: Option<Vec<String>>,
}

async fn admin_tag(State(s): State<Arc<AppState>>, bytes: Bytes) -> Result<Json<Value>, ApiError> {
    let req: TagRequest = body(&bytes)?;
    let allow = req.seed_tags.map(|v| v.into_iter().collect());
    let summary = mutate(s, move |e, store| e.tag(store, allow.as_ref())).await?;
    Ok(Json(json!({ "annotated": summary.annotated, "vocabulary": summary.vocabulary })))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/search", get(search))
        .route("/api/summary", get(summary))
        .route("/api/datasets/{id}", get(dataset))
        .route("/api/datasets/{id}/related", get(related))
        .route("/api/entities/{source_name}", get(entity))
        .route("/api/tags/{tag}/datasets", get(tag_datasets))
        .route("/api/admin/linkcheck", post(admin_linkcheck))
        .route("/api/admin/dedup", post(admin_dedup))
        .route("/api/admin/tag", post(admin_tag))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> Result<(), AppError> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::Io(e.to_string()))
}
