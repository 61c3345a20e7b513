//! Generation client: request keys, endpoints, retries, and the response cache.

mod cache;
mod endpoint;
mod request;
mod retry;

use std::time::Instant;

use log::{debug, warn};
use thiserror::Error;

pub use cache::{CacheEntry, CacheError, ResponseCache};
pub(crate) use endpoint::HttpTransport;
pub use endpoint::{
    generator_from_spec, Generator, HttpGenerator, MockGenerator, MockRule, TransportError, AUTH_TOKEN_ENV,
};
pub use request::{request_key, sha256_hex, truncate_at_stop, Decoding, GenerationRequest, GenerationResponse};
use retry::InFlight;
pub use retry::{RateLimiter, RetryPolicy};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gave up after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: TransportError },
    #[error(transparent)]
    Protocol(TransportError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl ClientError {
    /// The last transport failure, when there was one.
    pub fn transport(&self) -> Option<&TransportError> {
        match self {
            ClientError::Exhausted { last, .. } | ClientError::Protocol(last) => Some(last),
            _ => None,
        }
    }
}

/// Sends `request` to `endpoint`, retrying retryable failures with backoff.
///
/// The returned text is the endpoint's output cut at the first stop sequence
/// and otherwise untouched.
pub fn generate(
    endpoint: &dyn Generator,
    request: &GenerationRequest,
    policy: &RetryPolicy,
) -> Result<GenerationResponse, ClientError> {
    request.validate().map_err(ClientError::InvalidRequest)?;
    let started = Instant::now();
    let text = with_retries(policy, || {
        let text = endpoint.complete(request)?;
        if text.is_empty() {
            return Err(TransportError::Protocol("endpoint returned empty text".into()));
        }
        Ok(text)
    })?;
    Ok(GenerationResponse {
        request_key: request.key().to_string(),
        raw_text: truncate_at_stop(&text, request.stop_sequences()).to_string(),
        latency_ms: u64::try_from(started.elapsed().as_millis()).unwrap_or(u64::MAX),
        from_cache: false,
    })
}

/// Runs `call` until it succeeds, fails with a non-retryable error, or the
/// attempt budget is spent.
pub fn with_retries<T>(
    policy: &RetryPolicy,
    mut call: impl FnMut() -> Result<T, TransportError>,
) -> Result<T, ClientError> {
    let max_attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match call() {
            Ok(value) => return Ok(value),
            Err(e) if !e.is_retryable() => return Err(ClientError::Protocol(e)),
            Err(e) if attempt >= max_attempts => {
                return Err(ClientError::Exhausted { attempts: attempt, last: e });
            }
            Err(e) => {
                let wait = policy.delay_before_retry(attempt);
                debug!("attempt {attempt}/{max_attempts} failed ({e}); retrying in {wait:?}");
                std::thread::sleep(wait);
            }
        }
    }
}

/// Serves `request` from `cache` when possible, otherwise generates and
/// persists the response.
pub fn cached_generate(
    cache: &ResponseCache,
    endpoint: &dyn Generator,
    request: &GenerationRequest,
    policy: &RetryPolicy,
) -> Result<GenerationResponse, ClientError> {
    if let Some(hit) = cache.get(request.key()) {
        return Ok(GenerationResponse {
            request_key: hit.request_key,
            raw_text: hit.raw_text,
            latency_ms: hit.latency_ms,
            from_cache: true,
        });
    }
    let response = generate(endpoint, request, policy)?;
    cache.insert(&response.request_key, &response.raw_text, response.latency_ms)?;
    Ok(response)
}

/// Thread-safe front end combining an endpoint with retry, rate limiting, an
/// in-flight bound, and an optional cache.
pub struct Client {
    endpoint: Box<dyn Generator>,
    policy: RetryPolicy,
    rate: Option<RateLimiter>,
    in_flight: InFlight,
    cache: Option<ResponseCache>,
}

impl Client {
    pub fn new(endpoint: Box<dyn Generator>) -> Self {
        Client { endpoint, policy: RetryPolicy::default(), rate: None, in_flight: InFlight::new(4), cache: None }
    }

    pub fn with_retry(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_second: f64) -> Self {
        self.rate = RateLimiter::per_second(requests_per_second);
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.in_flight = InFlight::new(limit);
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn endpoint(&self) -> &dyn Generator {
        self.endpoint.as_ref()
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, ClientError> {
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(request.key())) {
            return Ok(GenerationResponse {
                request_key: hit.request_key,
                raw_text: hit.raw_text,
                latency_ms: hit.latency_ms,
                from_cache: true,
            });
        }
        let response = {
            let _permit = self.in_flight.acquire();
            if let Some(rate) = &self.rate {
                rate.acquire();
            }
            generate(self.endpoint.as_ref(), request, &self.policy)
        };
        let response = response.inspect_err(|e| warn!("generation failed for key {}: {e}", request.key()))?;
        if let Some(cache) = &self.cache {
            cache.insert(&response.request_key, &response.raw_text, response.latency_ms)?;
        }
        Ok(response)
    }
}
