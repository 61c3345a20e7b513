use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::GenerationRequest;

/// Bearer token for generation and embedding endpoints. Read once per client,
/// never logged.
pub const AUTH_TOKEN_ENV: &str = "RELRAG_API_TOKEN";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl TransportError {
    /// Protocol errors come from a reachable endpoint that answered with
    /// something unusable; repeating the call will not help.
    pub fn is_retryable(&self) -> bool {
        !matches!(self, TransportError::Protocol(_))
    }
}

/// Anything that turns a prompt into text: an HTTP model server, a canned
/// mock, or a test double.
pub trait Generator: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<String, TransportError>;

    /// Short description for manifests and logs.
    fn describe(&self) -> String;
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn complete(&self, request: &GenerationRequest) -> Result<String, TransportError> {
        (**self).complete(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_new_tokens: u32,
    temperature: f64,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

/// Shared blocking HTTP plumbing for generation and embedding endpoints.
#[derive(Clone)]
pub(crate) struct HttpTransport {
    url: String,
    agent: ureq::Agent,
    token: Option<String>,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("url", &self.url)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpTransport { url: url.into(), agent, token: std::env::var(AUTH_TOKEN_ENV).ok().filter(|t| !t.is_empty()) }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs `body` as JSON and returns the raw response body of a 2xx reply.
    pub fn post_json(&self, body: &impl Serialize) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| TransportError::Connection(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportError::Connection(e.to_string()))?;
        if !(200..300).contains(&status) {
            let mut body = text;
            body.truncate(512);
            return Err(TransportError::Status { status, body });
        }
        if text.trim().is_empty() {
            return Err(TransportError::Protocol("empty response body".into()));
        }
        Ok(text)
    }
}

/// Generation over HTTP: `POST {"model","prompt","max_new_tokens","temperature","stop"}`
/// answered by `{"text": ...}`. Base and fine-tuned models share this contract
/// and differ only in the model id.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    transport: HttpTransport,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>) -> Self {
        HttpGenerator { transport: HttpTransport::new(url, Duration::from_secs(120)) }
    }
}

impl Generator for HttpGenerator {
    fn complete(&self, request: &GenerationRequest) -> Result<String, TransportError> {
        let body = WireRequest {
            model: request.model_id(),
            prompt: request.prompt(),
            max_new_tokens: request.max_new_tokens(),
            temperature: request.temperature(),
            stop: request.stop_sequences(),
        };
        let text = self.transport.post_json(&body)?;
        let parsed: WireResponse = serde_json::from_str(&text)
            .map_err(|e| TransportError::Protocol(format!("expected {{\"text\": ...}}: {e}")))?;
        Ok(parsed.text)
    }

    fn describe(&self) -> String {
        self.transport.url().to_string()
    }
}

/// One line of a mock fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockRule {
    /// Answer `completion` when the prompt contains `match`.
    Match {
        #[serde(rename = "match")]
        pattern: String,
        completion: String,
    },
    /// Answer for prompts no rule matches.
    Default { default: String },
}

/// Offline endpoint mapping prompt substrings to canned completions.
///
/// Rules are tried in file order and the first match wins. A prompt that
/// matches nothing, with no default rule, gets a protocol error. Every call
/// is counted.
#[derive(Debug, Default)]
pub struct MockGenerator {
    rules: Vec<(String, String)>,
    default: Option<String>,
    source: Option<PathBuf>,
    calls: AtomicU64,
}

impl MockGenerator {
    pub fn new(rules: impl IntoIterator<Item = MockRule>) -> Self {
        let mut mock = MockGenerator::default();
        for rule in rules {
            match rule {
                MockRule::Match { pattern, completion } => mock.rules.push((pattern, completion)),
                MockRule::Default { default } => mock.default = Some(default),
            }
        }
        mock
    }

    /// Reads a JSONL fixture of [`MockRule`]s.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule: MockRule =
                serde_json::from_str(line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
            rules.push(rule);
        }
        let mut mock = MockGenerator::new(rules);
        mock.source = Some(path.to_path_buf());
        Ok(mock)
    }

    pub fn write_fixture(path: impl AsRef<Path>, rules: &[MockRule]) -> std::io::Result<()> {
        let mut out = String::new();
        for r in rules {
            out.push_str(&serde_json::to_string(r).expect("rule serializes"));
            out.push('\n');
        }
        fs::write(path, out)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Generator for MockGenerator {
    fn complete(&self, request: &GenerationRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.rules
            .iter()
            .find(|(pattern, _)| request.prompt().contains(pattern.as_str()))
            .map(|(_, completion)| completion.clone())
            .or_else(|| self.default.clone())
            .ok_or_else(|| TransportError::Protocol("mock has no completion for this prompt".into()))
    }

    fn describe(&self) -> String {
        match &self.source {
            Some(p) => format!("mock:{}", p.display()),
            None => "mock".into(),
        }
    }
}

/// Parses an endpoint spec: `mock:<fixture-file>` or an `http(s)://` URL.
pub fn generator_from_spec(spec: &str) -> Result<Box<dyn Generator>, String> {
    if let Some(path) = spec.strip_prefix("mock:") {
        return Ok(Box::new(MockGenerator::from_file(path)?));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(HttpGenerator::new(spec)));
    }
    Err(format!("unsupported endpoint {spec:?} (expected mock:<file> or an http(s) URL)"))
}
