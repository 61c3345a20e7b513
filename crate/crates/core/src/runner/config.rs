use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::client::Decoding;
use crate::dataset::KnownDataset;
use crate::normalize::NormalizationPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Simple,
    Rag,
    Finetuned,
    RagFinetuned,
}

impl Method {
    /// Row order in reports.
    pub const ALL: [Method; 4] = [Method::Simple, Method::Rag, Method::Finetuned, Method::RagFinetuned];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Simple => "simple",
            Method::Rag => "rag",
            Method::Finetuned => "finetuned",
            Method::RagFinetuned => "rag_finetuned",
        }
    }

    pub fn uses_retrieval(self) -> bool {
        matches!(self, Method::Rag | Method::RagFinetuned)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected simple, rag, finetuned or rag_finetuned)"))
    }
}

/// Everything needed to reproduce one (dataset, model, method) run.
///
/// The text form is one `key = value` per line; `#` starts a comment line.
/// `stop` takes a JSON array of strings. Empty values leave optional keys
/// unset. Relative paths are resolved against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_name: String,
    pub bundle_path: PathBuf,
    pub method: Method,
    /// `mock:<fixture>` or an http(s) URL.
    pub generation_endpoint: String,
    pub generation_model_id: String,
    /// Row label in reports; defaults to the model id. Set it to the base
    /// model's name on fine-tuned runs to group them with their base model.
    pub model_label: Option<String>,
    /// `test` or an http(s) URL.
    pub embedding_endpoint: Option<String>,
    /// Model name sent to an HTTP embedder; part of the store fingerprint.
    pub embedding_model: String,
    pub store_path: Option<PathBuf>,
    /// Query template file; the built-in template when unset.
    pub template_path: Option<PathBuf>,
    pub example_template_path: Option<PathBuf>,
    pub k: usize,
    pub decoding: Decoding,
    pub parallelism: usize,
    pub cache_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub normalization: NormalizationPolicy,
    pub retry_attempts: u32,
    pub requests_per_second: Option<f64>,
    /// Permits retrieval-augmented runs on datasets whose prompts come from
    /// the training split.
    pub allow_train_overlap_prompting: bool,
}

/// Config keys in canonical order.
pub const DEFAULT_EMBEDDING_MODEL: &str = "sentence-t5-base";

pub const CONFIG_KEYS: [&str; 23] = [
    "dataset_name",
    "bundle_path",
    "method",
    "generation_endpoint",
    "generation_model_id",
    "model_label",
    "embedding_endpoint",
    "embedding_model",
    "store_path",
    "template_path",
    "example_template_path",
    "k",
    "max_new_tokens",
    "temperature",
    "stop",
    "parallelism",
    "cache_path",
    "output_dir",
    "seed",
    "normalization",
    "retry_attempts",
    "requests_per_second",
    "allow_train_overlap_prompting",
];

const REQUIRED_KEYS: [&str; 6] =
    ["dataset_name", "bundle_path", "method", "generation_endpoint", "generation_model_id", "output_dir"];

fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

/// Parses `key = value` lines into a map, rejecting unknown and repeated keys.
pub fn parse_config_pairs(text: &str) -> Result<BTreeMap<String, String>, RunError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = split_pair(line).map_err(|e| config_err(format!("line {}: {e}", i + 1)))?;
        if map.insert(key.clone(), value).is_some() {
            return Err(config_err(format!("line {}: key {key:?} given twice", i + 1)));
        }
    }
    Ok(map)
}

fn split_pair(text: &str) -> Result<(String, String), String> {
    let (key, value) = text.split_once('=').ok_or_else(|| format!("expected key = value, got {text:?}"))?;
    let key = key.trim();
    if !CONFIG_KEYS.contains(&key) {
        return Err(format!("unknown key {key:?}"));
    }
    Ok((key.to_string(), value.trim().to_string()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        Self::from_pairs(&parse_config_pairs(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Parses a config file with `key=value` overrides applied on top.
    pub fn load_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, RunError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_path_buf(), source })?;
        let mut pairs = parse_config_pairs(&text)?;
        apply_overrides(&mut pairs, overrides)?;
        Self::from_pairs(&pairs)
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, RunError> {
        let mut pairs = self.to_pairs();
        apply_overrides(&mut pairs, overrides)?;
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, RunError> {
        for key in REQUIRED_KEYS {
            if pairs.get(key).is_none_or(|v| v.is_empty()) {
                return Err(config_err(format!("missing required key {key:?}")));
            }
        }
        let get = |key: &str| pairs.get(key).map(String::as_str).filter(|v| !v.is_empty());
        let opt_path = |key: &str| get(key).map(PathBuf::from);
        fn num<T: FromStr>(key: &str, value: Option<&str>, default: T) -> Result<T, RunError>
        where
            T::Err: fmt::Display,
        {
            value.map_or(Ok(default), |v| v.parse().map_err(|e| config_err(format!("{key}: cannot parse {v:?}: {e}"))))
        }

        let defaults = Decoding::default();
        let stop = match get("stop") {
            None => defaults.stop.clone(),
            Some(v) => serde_json::from_str::<Vec<String>>(v)
                .map_err(|e| config_err(format!("stop: expected a JSON array of strings: {e}")))?,
        };
        let decoding = Decoding {
            max_new_tokens: num("max_new_tokens", get("max_new_tokens"), defaults.max_new_tokens)?,
            temperature: num("temperature", get("temperature"), defaults.temperature)?,
            stop,
        };
        let output_dir = PathBuf::from(get("output_dir").expect("required"));
        let cache_path = opt_path("cache_path").unwrap_or_else(|| output_dir.join("cache.jsonl"));
        let config = ExperimentConfig {
            dataset_name: get("dataset_name").expect("required").to_string(),
            bundle_path: PathBuf::from(get("bundle_path").expect("required")),
            method: get("method").expect("required").parse().map_err(config_err)?,
            generation_endpoint: get("generation_endpoint").expect("required").to_string(),
            generation_model_id: get("generation_model_id").expect("required").to_string(),
            model_label: get("model_label").map(String::from),
            embedding_endpoint: get("embedding_endpoint").map(String::from),
            embedding_model: get("embedding_model").unwrap_or(DEFAULT_EMBEDDING_MODEL).to_string(),
            store_path: opt_path("store_path"),
            template_path: opt_path("template_path"),
            example_template_path: opt_path("example_template_path"),
            k: num("k", get("k"), 1)?,
            decoding,
            parallelism: num("parallelism", get("parallelism"), 4)?,
            cache_path,
            output_dir,
            seed: num("seed", get("seed"), 0)?,
            normalization: get("normalization")
                .map_or(Ok(NormalizationPolicy::default()), str::parse)
                .map_err(config_err)?,
            retry_attempts: num("retry_attempts", get("retry_attempts"), 3)?,
            requests_per_second: get("requests_per_second")
                .map(|v| v.parse().map_err(|e| config_err(format!("requests_per_second: {e}"))))
                .transpose()?,
            allow_train_overlap_prompting: num(
                "allow_train_overlap_prompting",
                get("allow_train_overlap_prompting"),
                false,
            )?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Every key with its value as it would appear in a config file.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let pairs: [(&str, String); 23] = [
            ("dataset_name", self.dataset_name.clone()),
            ("bundle_path", self.bundle_path.display().to_string()),
            ("method", self.method.to_string()),
            ("generation_endpoint", self.generation_endpoint.clone()),
            ("generation_model_id", self.generation_model_id.clone()),
            ("model_label", self.model_label.clone().unwrap_or_default()),
            ("embedding_endpoint", self.embedding_endpoint.clone().unwrap_or_default()),
            ("embedding_model", self.embedding_model.clone()),
            ("store_path", path(&self.store_path)),
            ("template_path", path(&self.template_path)),
            ("example_template_path", path(&self.example_template_path)),
            ("k", self.k.to_string()),
            ("max_new_tokens", self.decoding.max_new_tokens.to_string()),
            ("temperature", format!("{:?}", self.decoding.temperature)),
            ("stop", serde_json::to_string(&self.decoding.stop).expect("strings serialize")),
            ("parallelism", self.parallelism.to_string()),
            ("cache_path", self.cache_path.display().to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("normalization", self.normalization.as_str().to_string()),
            ("retry_attempts", self.retry_attempts.to_string()),
            ("requests_per_second", self.requests_per_second.map(|r| r.to_string()).unwrap_or_default()),
            ("allow_train_overlap_prompting", self.allow_train_overlap_prompting.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Config file text with keys in canonical order.
    pub fn to_config_text(&self) -> String {
        let pairs = self.to_pairs();
        CONFIG_KEYS.iter().map(|k| format!("{k} = {}\n", pairs[*k])).collect()
    }

    pub fn model_label(&self) -> &str {
        self.model_label.as_deref().unwrap_or(&self.generation_model_id)
    }

    pub fn known_dataset(&self) -> Option<KnownDataset> {
        KnownDataset::from_name(&self.dataset_name)
    }

    /// Checks that hold regardless of the bundle's contents.
    pub fn validate(&self) -> Result<(), RunError> {
        if self.k == 0 {
            return Err(config_err("k must be at least 1"));
        }
        if self.parallelism == 0 {
            return Err(config_err("parallelism must be at least 1"));
        }
        if self.retry_attempts == 0 {
            return Err(config_err("retry_attempts must be at least 1"));
        }
        if self.decoding.max_new_tokens == 0 {
            return Err(config_err("max_new_tokens must be positive"));
        }
        if !(self.decoding.temperature >= 0.0 && self.decoding.temperature.is_finite()) {
            return Err(config_err("temperature must be finite and non-negative"));
        }
        if self.requests_per_second.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return Err(config_err("requests_per_second must be positive"));
        }
        if self.method.uses_retrieval() {
            if self.embedding_endpoint.is_none() {
                return Err(config_err(format!("method {} requires embedding_endpoint", self.method)));
            }
            if self.store_path.is_none() {
                return Err(config_err(format!("method {} requires store_path", self.method)));
            }
        }
        if self.known_dataset().is_some_and(|d| !d.has_heldout_prompt_split()) {
            self.check_overlap_rules(self.known_dataset().expect("checked").name())?;
        }
        Ok(())
    }

    /// Rules for datasets without a held-out prompt split, where any
    /// fine-tuned model saw prompts built from the training split.
    pub(crate) fn check_overlap_rules(&self, dataset: &str) -> Result<(), RunError> {
        match self.method {
            Method::RagFinetuned => Err(RunError::MethodNotAllowed {
                dataset: dataset.to_string(),
                method: self.method,
                reason: "there is no held-out prompt split, so the fine-tuned model's training prompts overlap the retrieval pool".into(),
            }),
            Method::Rag if !self.allow_train_overlap_prompting => Err(RunError::MethodNotAllowed {
                dataset: dataset.to_string(),
                method: self.method,
                reason: "prompts and retrieved examples both come from the training split; set allow_train_overlap_prompting = true to run it anyway".into(),
            }),
            _ => Ok(()),
        }
    }
}

fn apply_overrides(pairs: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<(), RunError> {
    for o in overrides {
        let (key, value) = split_pair(o).map_err(|e| config_err(format!("override {o:?}: {e}")))?;
        pairs.insert(key, value);
    }
    Ok(())
}

/// Keys whose values differ, as `key: old -> new` lines.
pub fn config_diff(old: &ExperimentConfig, new: &ExperimentConfig) -> Vec<String> {
    let (a, b) = (old.to_pairs(), new.to_pairs());
    CONFIG_KEYS.iter().filter(|k| a[**k] != b[**k]).map(|k| format!("{k}: {:?} -> {:?}", a[*k], b[*k])).collect()
}
