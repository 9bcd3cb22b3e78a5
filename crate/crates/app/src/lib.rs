//! Configuration, pipeline orchestration and the HTTP API behind the
//! `datanav` binary.

pub mod api;
pub mod config;
pub mod engine;

pub use config::Config;
pub use engine::Engine;

use datanav_core::dedup::DedupError;
use datanav_core::ingest::IngestError;
use datanav_core::linkhealth::LinkHealthError;
use datanav_core::lm::LmError;
use datanav_core::search::SearchError;
use datanav_core::store::StoreError;
use datanav_core::tagging::TaggingError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("cannot bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dedup(#[from] DedupError),
    #[error(transparent)]
    Tagging(#[from] TaggingError),
    #[error(transparent)]
    LinkHealth(#[from] LinkHealthError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Lm(#[from] LmError),
}

impl AppError {
    /// Process exit status: 1 for usage mistakes, 2 for pipeline failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            _ => 2,
        }
    }
}
