//! End-to-end experiment runs: config, execution, manifests, and reports.

mod config;
mod execute;
mod report;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{CacheError, ClientError, Decoding};
use crate::dataset::IngestError;
use crate::eval::{EvalError, MetricsReport, ScoringMode};
use crate::prompting::PromptError;
use crate::retrieval::RetrievalError;

pub use config::{config_diff, parse_config_pairs, ExperimentConfig, Method, CONFIG_KEYS, DEFAULT_EMBEDDING_MODEL};
pub use execute::{
    read_predictions, resume, resume_with, run_experiment, run_experiment_with, write_predictions, MANIFEST_FILE,
    PARTIAL_PREDICTIONS_FILE, PREDICTIONS_FILE, RETRIEVALS_FILE,
};
pub use report::{
    build_report, emit_report, render_report_csv, render_report_text, ReportRow, ReportTable, REPORT_CSV_FILE,
    REPORT_TEXT_FILE,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("method {method} is not allowed on {dataset}: {reason}")]
    MethodNotAllowed { dataset: String, method: Method, reason: String },
    #[error("config names dataset {config:?} but the bundle holds {bundle:?}")]
    DatasetMismatch { config: String, bundle: String },
    #[error("config differs from the manifest:\n  {}", .0.join("\n  "))]
    ConfigDrift(Vec<String>),
    #[error("leakage: retrieval for test instance {query_id} returned {neighbor_id}, which is in the test split")]
    Leakage { query_id: String, neighbor_id: String },
    #[error("retrieved id {0} is not in the training split of the bundle")]
    UnknownNeighbor(String),
    #[error("request key {key} maps to two different requests")]
    KeyCollision { key: String },
    #[error("endpoint {0}")]
    Endpoint(String),
    #[error("generation stopped after {completed} of {total} responses: {source}")]
    Generation {
        completed: usize,
        total: usize,
        #[source]
        source: ClientError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Written to `manifest.json` when a run starts and rewritten when it ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub config: ExperimentConfig,
    /// Canonical dataset name from the bundle's schema.
    pub dataset: String,
    pub dataset_counts: BTreeMap<String, usize>,
    pub label_count: usize,
    pub generator: String,
    pub decoding: Decoding,
    pub store_fingerprint: Option<String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub resumed: bool,
    /// Test instances whose response was already cached when the run began.
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Distinct requests sent to the endpoint.
    pub requests_issued: u64,
    pub unparseable_count: u64,
    pub predictions_sha256: Option<String>,
    pub metrics: Vec<MetricsReport>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn metrics_for(&self, mode: ScoringMode) -> Option<&MetricsReport> {
        self.metrics.iter().find(|m| m.mode == mode)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text)
            .map_err(|e| RunError::Malformed { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RunError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
    }
}
