//! Sentence-level relation extraction experiments over pluggable embedding
//! and generation endpoints.
//!
//! The pipeline runs in four methods: simple query prompting, retrieval
//! augmented prompting, prompting a fine-tuned model, and retrieval augmented
//! prompting with a fine-tuned generator. "Fine-tuned" is only a different
//! model id behind the same generation endpoint; no training happens here.

pub mod client;
pub mod dataset;
pub mod eval;
pub mod normalize;
pub mod prompting;
pub mod retrieval;
pub mod runner;

pub use client::{Decoding, GenerationRequest, GenerationResponse, Generator, ResponseCache, RetryPolicy};
pub use dataset::{DatasetBundle, KnownDataset, RelationInstance, RelationSchema, Span, Split};
pub use eval::{MetricsReport, ScoringMode};
pub use normalize::{MatchKind, NormalizationPolicy, PredictionRecord};
pub use prompting::{PromptRecord, PromptTemplate, TemplateSet};
pub use retrieval::{EmbeddingProvider, EmbeddingStore, RetrievalResult};
pub use runner::{ExperimentConfig, Method, RunManifest};
