//! Benchmark ingestion: parse TACRED-family JSON and SemEval-2010 Task 8 text
//! into [`RelationInstance`] lists, derive label schemas, and assemble
//! split-disjoint [`DatasetBundle`]s.
//!
//! Everything downstream consumes the canonical JSONL form written by
//! [`write_instances_jsonl`], so the rest of the pipeline never needs to know
//! which benchmark an instance came from.

mod bundle;
mod error;
mod ingest;
mod instance;
mod jsonl;
mod known;
mod schema;
mod semeval;
mod tacred;

pub use bundle::{assemble_bundle, DatasetBundle, BUNDLE_SCHEMA_FILE};
pub use error::IngestError;
pub use ingest::{count_checks, ingest_files, load_split, CountCheck, SourceFormat};
pub use instance::{RelationInstance, Span, Split};
pub use jsonl::{read_instances_jsonl, write_instances_jsonl, InstanceRecord};
pub use known::{KnownDataset, SplitCounts, SEMEVAL_LABELS, TACRED_LABELS};
pub use schema::{derive_schema, RelationSchema};
pub use semeval::{load_semeval, parse_semeval};
pub use tacred::{load_tacred_family, parse_tacred_json, TacredRecord};
