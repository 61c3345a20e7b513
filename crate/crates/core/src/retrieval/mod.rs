//! Sentence embeddings and exact nearest-neighbour search over training data.

mod provider;
mod store;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::client::ClientError;
use crate::dataset::Split;

pub use provider::{
    embed_text, fnv1a64, provider_from_spec, EmbeddingProvider, HashingProvider, HttpEmbeddingProvider,
    HASHING_DIMENSION,
};
pub use store::{build_store, build_store_parallel, EmbeddingRecord, EmbeddingStore, RetrievalResult, StoreHeader};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector has a non-finite coordinate")]
    NonFinite,
    #[error("provider returned a zero vector for instance {id}")]
    ZeroVector { id: String },
    #[error("duplicate instance id {0} in store")]
    DuplicateId(String),
    #[error("k={k} out of range for a store of {size} records")]
    KOutOfRange { k: usize, size: usize },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("instance {id} is from the {split} split; stores hold training instances only")]
    NotTrain { id: String, split: Split },
    #[error("store built with provider {store:?} but queried with {provider:?}")]
    FingerprintMismatch { store: String, provider: String },
    #[error("embedding provider failed: {0}")]
    Provider(#[source] ClientError),
    #[error("store build aborted after {completed} of {total} records at instance {id}: {source}")]
    BuildAborted {
        completed: usize,
        total: usize,
        id: String,
        #[source]
        source: Box<RetrievalError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed store: {0}")]
    Format(String),
}

/// `dot(a, b) / (|a| |b|)`, computed in f64 and clamped to [-1, 1].
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

pub(crate) fn norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}
