use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use log::info;
use serde::{Deserialize, Serialize};

use super::{dot, embed_text, norm, EmbeddingProvider, RetrievalError};
use crate::client::RetryPolicy;
use crate::dataset::{RelationInstance, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub instance_id: String,
    pub vector: Vec<f32>,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub neighbor_id: String,
    pub similarity: f64,
}

/// First line of a store file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub dimension: usize,
    pub count: usize,
    pub provider_fingerprint: String,
}

/// In-memory table of training-sentence embeddings, searched exhaustively.
///
/// Vectors live in one contiguous buffer; record `i` occupies
/// `vectors[i*d .. (i+1)*d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    fingerprint: String,
    ids: Vec<String>,
    vectors: Vec<f32>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dimension: usize, fingerprint: impl Into<String>) -> Result<Self, RetrievalError> {
        if dimension == 0 {
            return Err(RetrievalError::DimensionMismatch { expected: 1, found: 0 });
        }
        Ok(EmbeddingStore {
            dimension,
            fingerprint: fingerprint.into(),
            ids: Vec::new(),
            vectors: Vec::new(),
            norms: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn insert(&mut self, id: &str, vector: &[f32]) -> Result<(), RetrievalError> {
        if vector.len() != self.dimension {
            return Err(RetrievalError::DimensionMismatch { expected: self.dimension, found: vector.len() });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        let n = norm(vector);
        if n == 0.0 {
            return Err(RetrievalError::ZeroVector { id: id.to_string() });
        }
        if self.index.contains_key(id) {
            return Err(RetrievalError::DuplicateId(id.to_string()));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.vectors.extend_from_slice(vector);
        self.norms.push(n);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn vector(&self, position: usize) -> &[f32] {
        &self.vectors[position * self.dimension..(position + 1) * self.dimension]
    }

    pub fn get(&self, id: &str) -> Option<EmbeddingRecord> {
        self.index.get(id).map(|&i| self.record(i))
    }

    pub fn record(&self, position: usize) -> EmbeddingRecord {
        EmbeddingRecord {
            instance_id: self.ids[position].clone(),
            vector: self.vector(position).to_vec(),
            norm: self.norms[position],
        }
    }

    pub fn records(&self) -> impl Iterator<Item = EmbeddingRecord> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    pub fn check_fingerprint(&self, provider_fingerprint: &str) -> Result<(), RetrievalError> {
        if self.fingerprint == provider_fingerprint {
            Ok(())
        } else {
            Err(RetrievalError::FingerprintMismatch {
                store: self.fingerprint.clone(),
                provider: provider_fingerprint.to_string(),
            })
        }
    }

    /// The `k` records most cosine-similar to `query`, best first; equal
    /// similarities are ordered by ascending instance id.
    pub fn query_top_k(&self, query_id: &str, query: &[f32], k: usize) -> Result<Vec<RetrievalResult>, RetrievalError> {
        if query.len() != self.dimension {
            return Err(RetrievalError::DimensionMismatch { expected: self.dimension, found: query.len() });
        }
        if k == 0 || k > self.len() {
            return Err(RetrievalError::KOutOfRange { k, size: self.len() });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(RetrievalError::ZeroNorm);
        }
        let mut scored: Vec<(f64, usize)> = self
            .vectors
            .chunks_exact(self.dimension)
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (v, n))| ((dot(query, v) / (qn * n)).clamp(-1.0, 1.0), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(similarity, i)| RetrievalResult {
                query_id: query_id.to_string(),
                neighbor_id: self.ids[i].clone(),
                similarity,
            })
            .collect())
    }

    pub fn header(&self) -> StoreHeader {
        StoreHeader { dimension: self.dimension, count: self.len(), provider_fingerprint: self.fingerprint.clone() }
    }

    /// Writes the store: one JSON header line, then per record a `u32` LE id
    /// byte length, the UTF-8 id, and `dimension` LE `f32` values.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header())?;
        out.write_all(b"\n")?;
        for (i, id) in self.ids.iter().enumerate() {
            let len = u32::try_from(id.len()).map_err(|_| std::io::Error::other("instance id too long"))?;
            out.write_all(&len.to_le_bytes())?;
            out.write_all(id.as_bytes())?;
            for x in self.vector(i) {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read_from(input: impl Read) -> Result<Self, RetrievalError> {
        let mut input = BufReader::new(input);
        let mut line = String::new();
        input.read_line(&mut line).map_err(|e| RetrievalError::Format(format!("header: {e}")))?;
        let header: StoreHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| RetrievalError::Format(format!("header: {e}")))?;
        let mut store = EmbeddingStore::new(header.dimension, header.provider_fingerprint)?;
        let short = |what: &str, i: usize| RetrievalError::Format(format!("truncated {what} in record {i}"));
        let mut vector = vec![0f32; header.dimension];
        let mut bytes4 = [0u8; 4];
        for i in 0..header.count {
            input.read_exact(&mut bytes4).map_err(|_| short("id length", i))?;
            let mut id = vec![0u8; u32::from_le_bytes(bytes4) as usize];
            input.read_exact(&mut id).map_err(|_| short("id", i))?;
            let id =
                String::from_utf8(id).map_err(|_| RetrievalError::Format(format!("record {i}: id is not UTF-8")))?;
            for x in &mut vector {
                input.read_exact(&mut bytes4).map_err(|_| short("vector", i))?;
                *x = f32::from_le_bytes(bytes4);
            }
            store.insert(&id, &vector)?;
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest).map_err(|e| RetrievalError::Format(e.to_string()))?;
        if !rest.is_empty() {
            return Err(RetrievalError::Format(format!(
                "{} trailing bytes after {} records",
                rest.len(),
                header.count
            )));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let path = path.as_ref();
        let io_err = |source| RetrievalError::Io { path: path.to_path_buf(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = File::create(path).map_err(io_err)?;
        self.write_to(BufWriter::new(file)).map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| RetrievalError::Io { path: path.to_path_buf(), source })?;
        Self::read_from(file)
    }
}

/// Embeds every training instance's sentence, in input order.
pub fn build_store(
    instances: &[RelationInstance],
    provider: &dyn EmbeddingProvider,
    policy: &RetryPolicy,
) -> Result<EmbeddingStore, RetrievalError> {
    build_store_parallel(instances, provider, policy, 1)
}

/// [`build_store`] with up to `parallelism` provider calls in flight. The
/// result is identical for any parallelism.
pub fn build_store_parallel(
    instances: &[RelationInstance],
    provider: &dyn EmbeddingProvider,
    policy: &RetryPolicy,
    parallelism: usize,
) -> Result<EmbeddingStore, RetrievalError> {
    let mut store = EmbeddingStore::new(provider.dimension(), provider.fingerprint())?;
    let mut seen = HashMap::with_capacity(instances.len());
    for inst in instances {
        if inst.split != Split::Train {
            return Err(RetrievalError::NotTrain { id: inst.id.clone(), split: inst.split });
        }
        if seen.insert(inst.id.as_str(), ()).is_some() {
            return Err(RetrievalError::DuplicateId(inst.id.clone()));
        }
    }

    let total = instances.len();
    let slots: Vec<Mutex<Option<Vec<f32>>>> = (0..total).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let first_error: Mutex<Option<(usize, RetrievalError)>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..parallelism.clamp(1, total.max(1)) {
            s.spawn(|| loop {
                if failed.load(AtomicOrdering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, AtomicOrdering::SeqCst);
                if i >= total {
                    break;
                }
                match embed_text(provider, &instances[i].sentence(), policy) {
                    Ok(v) => {
                        *slots[i].lock().expect("slot poisoned") = Some(v);
                        let n = done.fetch_add(1, AtomicOrdering::SeqCst) + 1;
                        if n.is_multiple_of(10_000) {
                            info!("embedded {n}/{total} training sentences");
                        }
                    }
                    Err(e) => {
                        failed.store(true, AtomicOrdering::SeqCst);
                        let mut slot = first_error.lock().expect("error slot poisoned");
                        if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                            *slot = Some((i, e));
                        }
                    }
                }
            });
        }
    });

    let completed = done.load(AtomicOrdering::SeqCst);
    if let Some((i, source)) = first_error.into_inner().expect("error slot poisoned") {
        return Err(RetrievalError::BuildAborted {
            completed,
            total,
            id: instances[i].id.clone(),
            source: Box::new(source),
        });
    }
    for (inst, slot) in instances.iter().zip(slots) {
        let vector = slot.into_inner().expect("slot poisoned").expect("every slot filled");
        store.insert(&inst.id, &vector).map_err(|e| RetrievalError::BuildAborted {
            completed: store.len(),
            total,
            id: inst.id.clone(),
            source: Box::new(e),
        })?;
    }
    Ok(store)
}
