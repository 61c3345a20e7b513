use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::client::{with_retries, HttpTransport, RetryPolicy, TransportError};

/// Turns sentence text into a fixed-length vector.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    /// Provider name, model identifier, and dimension. Stores remember the
    /// fingerprint they were built with and refuse other providers.
    fn fingerprint(&self) -> String;

    /// One raw call to the backend, without retries or validation.
    fn embed_once(&self, text: &str) -> Result<Vec<f32>, TransportError>;
}

/// Embeds `text`, retrying transport failures and checking the result has the
/// provider's dimension and only finite coordinates.
pub fn embed_text(
    provider: &dyn EmbeddingProvider,
    text: &str,
    policy: &RetryPolicy,
) -> Result<Vec<f32>, RetrievalError> {
    if text.trim().is_empty() {
        return Err(RetrievalError::EmptyText);
    }
    let vector = with_retries(policy, || provider.embed_once(text)).map_err(RetrievalError::Provider)?;
    if vector.len() != provider.dimension() {
        return Err(RetrievalError::DimensionMismatch { expected: provider.dimension(), found: vector.len() });
    }
    if vector.iter().any(|x| !x.is_finite()) {
        return Err(RetrievalError::NonFinite);
    }
    Ok(vector)
}

pub const HASHING_DIMENSION: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const LCG_MUL: u64 = 6_364_136_223_846_793_005;
const LCG_INC: u64 = 1_442_695_040_888_963_407;

/// Offline deterministic embedder for tests and dry runs.
///
/// Each whitespace token is hashed with FNV-1a (64 bit); the hash seeds an
/// LCG whose successive states give the coordinates
/// `((state >> 11) / 2^53) * 2 - 1`. The sentence vector is the mean of its
/// token vectors. Shared tokens pull sentences together, which is enough
/// signal for retrieval tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashingProvider;

impl HashingProvider {
    pub fn token_vector(token: &str) -> [f64; HASHING_DIMENSION] {
        let mut state = fnv1a64(token.as_bytes());
        let mut out = [0.0; HASHING_DIMENSION];
        for x in &mut out {
            state = state.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
            *x = ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
        }
        out
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

impl EmbeddingProvider for HashingProvider {
    fn dimension(&self) -> usize {
        HASHING_DIMENSION
    }

    fn fingerprint(&self) -> String {
        format!("hashing-test|fnv1a-lcg|{HASHING_DIMENSION}")
    }

    fn embed_once(&self, text: &str) -> Result<Vec<f32>, TransportError> {
        let mut sum = [0.0f64; HASHING_DIMENSION];
        let mut n = 0usize;
        for token in text.split_whitespace() {
            for (s, x) in sum.iter_mut().zip(Self::token_vector(token)) {
                *s += x;
            }
            n += 1;
        }
        if n == 0 {
            return Err(TransportError::Protocol("no tokens to embed".into()));
        }
        Ok(sum.iter().map(|s| (s / n as f64) as f32).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f32>,
}

/// Embedding over HTTP: `POST {"model","input"}` answered by
/// `{"embedding": [...]}`. The dimension is learned from a probe call at
/// connect time.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    transport: HttpTransport,
    model: String,
    dimension: usize,
}

impl HttpEmbeddingProvider {
    pub fn connect(url: &str, model: &str, policy: &RetryPolicy) -> Result<Self, RetrievalError> {
        let transport = HttpTransport::new(url, Duration::from_secs(60));
        let probe =
            with_retries(policy, || call(&transport, model, "dimension probe")).map_err(RetrievalError::Provider)?;
        if probe.is_empty() {
            return Err(RetrievalError::DimensionMismatch { expected: 1, found: 0 });
        }
        Ok(HttpEmbeddingProvider { transport, model: model.to_string(), dimension: probe.len() })
    }
}

fn call(transport: &HttpTransport, model: &str, text: &str) -> Result<Vec<f32>, TransportError> {
    let body = transport.post_json(&EmbedRequest { model, input: text })?;
    let parsed: EmbedResponse = serde_json::from_str(&body)
        .map_err(|e| TransportError::Protocol(format!("expected {{\"embedding\": [...]}}: {e}")))?;
    Ok(parsed.embedding)
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn fingerprint(&self) -> String {
        format!("http-embedding|{}|{}", self.model, self.dimension)
    }

    fn embed_once(&self, text: &str) -> Result<Vec<f32>, TransportError> {
        call(&self.transport, &self.model, text)
    }
}

/// `test` selects [`HashingProvider`]; an `http(s)://` URL connects an
/// [`HttpEmbeddingProvider`] serving `model`.
pub fn provider_from_spec(
    spec: &str,
    model: &str,
    policy: &RetryPolicy,
) -> Result<Box<dyn EmbeddingProvider>, RetrievalError> {
    if spec == "test" {
        return Ok(Box::new(HashingProvider));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(HttpEmbeddingProvider::connect(spec, model, policy)?));
    }
    Err(RetrievalError::Format(format!("unsupported embedding provider {spec:?} (expected `test` or an http(s) URL)")))
}
