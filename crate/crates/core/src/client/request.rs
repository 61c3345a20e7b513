use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Decoding parameters sent with every generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

impl Default for Decoding {
    /// Greedy, short, stop at the first newline.
    fn default() -> Self {
        Decoding { max_new_tokens: 32, temperature: 0.0, stop: vec!["\n".to_string()] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    model_id: String,
    prompt: String,
    max_new_tokens: u32,
    temperature: f64,
    stop_sequences: Vec<String>,
    request_key: String,
}

/// Key material, serialized as compact JSON in this field order and hashed
/// with SHA-256. Changing this layout invalidates existing caches, hence the
/// version tag.
#[derive(Serialize)]
struct KeyMaterial<'a> {
    v: &'static str,
    model: &'a str,
    prompt: &'a str,
    max_new_tokens: u32,
    temperature: f64,
    stop: &'a [String],
}

const KEY_VERSION: &str = "relrag-request-v1";

impl GenerationRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>, decoding: &Decoding) -> Self {
        let model_id = model_id.into();
        let prompt = prompt.into();
        let request_key =
            request_key(&model_id, &prompt, decoding.max_new_tokens, decoding.temperature, &decoding.stop);
        GenerationRequest {
            model_id,
            prompt,
            max_new_tokens: decoding.max_new_tokens,
            temperature: decoding.temperature,
            stop_sequences: decoding.stop.clone(),
            request_key,
        }
    }

    pub fn key(&self) -> &str {
        &self.request_key
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn max_new_tokens(&self) -> u32 {
        self.max_new_tokens
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn stop_sequences(&self) -> &[String] {
        &self.stop_sequences
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model_id.is_empty() {
            return Err("model id is empty".into());
        }
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be positive".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature {} must be finite and non-negative", self.temperature));
        }
        Ok(())
    }
}

pub fn request_key(model_id: &str, prompt: &str, max_new_tokens: u32, temperature: f64, stop: &[String]) -> String {
    let material = KeyMaterial { v: KEY_VERSION, model: model_id, prompt, max_new_tokens, temperature, stop };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of arbitrary text, hex encoded.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Cuts `text` at the earliest occurrence of any stop sequence.
pub fn truncate_at_stop<'a>(text: &'a str, stop: &[String]) -> &'a str {
    let cut = stop.iter().filter(|s| !s.is_empty()).filter_map(|s| text.find(s.as_str())).min().unwrap_or(text.len());
    &text[..cut]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResponse {
    pub request_key: String,
    pub raw_text: String,
    pub latency_ms: u64,
    pub from_cache: bool,
}
