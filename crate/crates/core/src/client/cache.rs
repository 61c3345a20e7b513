use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::request::sha256_hex;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cache already holds a different response for key {key}")]
    Conflict { key: String },
}

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_key: String,
    pub raw_text: String,
    pub latency_ms: u64,
    pub created_at: String,
    /// SHA-256 over `request_key`, a NUL byte, and `raw_text`. Lines whose
    /// checksum does not verify are dropped at open.
    pub checksum: String,
}

impl CacheEntry {
    pub fn new(request_key: &str, raw_text: &str, latency_ms: u64) -> Self {
        CacheEntry {
            request_key: request_key.to_string(),
            raw_text: raw_text.to_string(),
            latency_ms,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            checksum: entry_checksum(request_key, raw_text),
        }
    }

    pub fn verify(&self) -> bool {
        self.checksum == entry_checksum(&self.request_key, &self.raw_text)
    }
}

fn entry_checksum(key: &str, raw_text: &str) -> String {
    sha256_hex(&format!("{key}\0{raw_text}"))
}

/// Append-only JSONL response cache with an in-memory index.
///
/// Reads take a shared lock on the index; writes go through a single
/// appender. Each key is written at most once.
#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    index: RwLock<HashMap<String, CacheEntry>>,
    writer: Mutex<File>,
    discarded: usize,
}

impl ResponseCache {
    /// Opens (creating if needed) the cache at `path` and indexes every
    /// verifiable line. Unparseable or checksum-failing lines are skipped with
    /// a warning. When a key appears twice, the first line wins.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| CacheError::Io { path: path.clone(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut index = HashMap::new();
        let mut discarded = 0;
        let mut needs_newline = false;
        if path.exists() {
            let file = File::open(&path).map_err(io_err)?;
            for (i, line) in BufReader::new(file).split(b'\n').enumerate() {
                let line = line.map_err(io_err)?;
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                match serde_json::from_slice::<CacheEntry>(&line) {
                    Ok(entry) if entry.verify() => {
                        index.entry(entry.request_key.clone()).or_insert(entry);
                    }
                    Ok(entry) => {
                        warn!(
                            "{}:{}: checksum mismatch for key {}, entry discarded",
                            path.display(),
                            i + 1,
                            entry.request_key
                        );
                        discarded += 1;
                    }
                    Err(e) => {
                        warn!("{}:{}: unreadable cache line discarded: {e}", path.display(), i + 1);
                        discarded += 1;
                    }
                }
            }
            let bytes = std::fs::read(&path).map_err(io_err)?;
            needs_newline = bytes.last().is_some_and(|b| *b != b'\n');
        }
        let mut writer = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        if needs_newline {
            // a torn final line from an interrupted run; start fresh after it
            writer.write_all(b"\n").map_err(io_err)?;
        }
        Ok(ResponseCache { path, index: RwLock::new(index), writer: Mutex::new(writer), discarded })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.index.read().expect("cache index poisoned").get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.read().expect("cache index poisoned").contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lines dropped at open because they failed to parse or verify.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Persists a response. Re-inserting the same text under a key is a no-op;
    /// different text is a [`CacheError::Conflict`].
    pub fn insert(&self, key: &str, raw_text: &str, latency_ms: u64) -> Result<CacheEntry, CacheError> {
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        if let Some(existing) = self.get(key) {
            return if existing.raw_text == raw_text {
                Ok(existing)
            } else {
                Err(CacheError::Conflict { key: key.to_string() })
            };
        }
        let entry = CacheEntry::new(key, raw_text, latency_ms);
        let mut line = serde_json::to_vec(&entry).expect("cache entry serializes");
        line.push(b'\n');
        let io_err = |source| CacheError::Io { path: self.path.clone(), source };
        writer.write_all(&line).map_err(io_err)?;
        writer.flush().map_err(io_err)?;
        self.index.write().expect("cache index poisoned").insert(key.to_string(), entry.clone());
        Ok(entry)
    }
}
