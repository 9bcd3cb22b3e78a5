//! Dataset catalog engine: unified-schema ingestion, three-stage
//! deduplication, graph-based topic tagging, adaptive link-health monitoring
//! and BM25 search with dataset/source navigation.

pub mod dedup;
pub mod embed;
pub mod exec;
pub mod ingest;
pub mod linkhealth;
pub mod lm;
pub mod schema;
pub mod search;
pub mod store;
pub mod synth;
pub mod tagging;
pub mod text;

pub use exec::ExecMode;
pub use schema::{DatasetId, DatasetRecord, Liveness};
