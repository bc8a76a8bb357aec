//! Language-model providers: a live chat-completions client and a replay
//! provider driven by a recorded transcript.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ProviderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(s: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: s.into(),
        }
    }

    pub fn user(s: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: s.into(),
        }
    }
}

/// Identifies one model request: which example (or stage) and which try.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestKey {
    pub example_id: String,
    pub attempt: u32,
}

impl RequestKey {
    pub fn new(example_id: impl Into<String>, attempt: u32) -> Self {
        RequestKey {
            example_id: example_id.into(),
            attempt,
        }
    }
}

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub key: RequestKey,
    pub request_digest: String,
    pub response: String,
}

/// Hex SHA-256 over the JSON encoding of the messages.
pub fn request_digest(messages: &[Message]) -> String {
    let json = serde_json::to_string(messages).expect("messages serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>, ProviderError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| {
        ProviderError::Config(format!("transcript {}: {e}", path.as_ref().display()))
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| ProviderError::Config(format!("transcript line {}: {e}", i + 1)))
        })
        .collect()
}

pub trait Provider: Send + Sync {
    fn complete(&self, key: &RequestKey, messages: &[Message]) -> Result<String, ProviderError>;

    /// Every exchange so far, in call order.
    fn records(&self) -> Vec<TranscriptRecord>;
}

/// Shared record keeping: in memory, and appended to a file when set.
#[derive(Debug, Default)]
struct Recorder {
    log: Mutex<Vec<TranscriptRecord>>,
    file: Option<PathBuf>,
}

impl Recorder {
    fn push(&self, rec: TranscriptRecord) -> Result<(), ProviderError> {
        if let Some(path) = &self.file {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
            f.flush()?;
        }
        self.log.lock().expect("recorder lock").push(rec);
        Ok(())
    }

    fn all(&self) -> Vec<TranscriptRecord> {
        self.log.lock().expect("recorder lock").clone()
    }
}

/// Replays responses keyed by `(example_id, attempt)`.
#[derive(Debug)]
pub struct ScriptedProvider {
    entries: BTreeMap<RequestKey, String>,
    rec: Recorder,
}

impl ScriptedProvider {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        ScriptedProvider {
            entries: records.into_iter().map(|r| (r.key, r.response)).collect(),
            rec: Recorder::default(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        Ok(Self::from_records(read_transcript(path)?))
    }

    /// Convenience for tests: `(example_id, attempt, response)` triples.
    pub fn from_triples<'a>(t: impl IntoIterator<Item = (&'a str, u32, &'a str)>) -> Self {
        Self::from_records(t.into_iter().map(|(id, a, r)| TranscriptRecord {
            key: RequestKey::new(id, a),
            request_digest: String::new(),
            response: r.to_string(),
        }))
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, key: &RequestKey, messages: &[Message]) -> Result<String, ProviderError> {
        let response = self
            .entries
            .get(key)
            .cloned()
            .ok_or_else(|| ProviderError::ScriptExhausted {
                example_id: key.example_id.clone(),
                attempt: key.attempt,
            })?;
        self.rec.push(TranscriptRecord {
            key: key.clone(),
            request_digest: request_digest(messages),
            response: response.clone(),
        })?;
        Ok(response)
    }

    fn records(&self) -> Vec<TranscriptRecord> {
        self.rec.all()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Http,
    #[default]
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Scripted mode: transcript to replay.
    pub transcript: Option<PathBuf>,
    /// Append every exchange to this file (both modes).
    pub record_to: Option<PathBuf>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_inflight: usize,
    pub retries: u32,
    pub retry_base_ms: u64,
    pub timeout_secs: u64,
    pub seed: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Scripted,
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "QUERYFORGE_API_KEY".into(),
            transcript: None,
            record_to: None,
            temperature: 0.2,
            max_output_tokens: 10_000,
            max_inflight: 2,
            retries: 3,
            retry_base_ms: 250,
            timeout_secs: 120,
            seed: 0,
        }
    }
}

impl ProviderConfig {
    /// Resolve relative paths against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.transcript, &mut self.record_to].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

pub fn make_provider(cfg: &ProviderConfig) -> Result<Box<dyn Provider>, ProviderError> {
    match cfg.mode {
        ProviderMode::Scripted => {
            let path = cfg
                .transcript
                .as_ref()
                .ok_or_else(|| ProviderError::Config("scripted mode needs `transcript`".into()))?;
            if !path.is_file() {
                return Err(ProviderError::Config(format!(
                    "transcript {} does not exist",
                    path.display()
                )));
            }
            let mut p = ScriptedProvider::from_file(path)?;
            p.rec.file = cfg.record_to.clone();
            Ok(Box::new(p))
        }
        ProviderMode::Http => Ok(Box::new(HttpProvider::new(cfg.clone())?)),
    }
}

/// Chat-completions client (`messages` in, `choices[0].message.content`
/// out) with bounded concurrency and retry on transient failures.
pub struct HttpProvider {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
    inflight: (Mutex<usize>, Condvar),
    rng: Mutex<StdRng>,
    rec: Recorder,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

impl HttpProvider {
    pub fn new(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(HttpProvider {
            rng: Mutex::new(StdRng::seed_from_u64(cfg.seed)),
            rec: Recorder {
                log: Mutex::default(),
                file: cfg.record_to.clone(),
            },
            cfg,
            client,
            inflight: (Mutex::new(0), Condvar::new()),
        })
    }

    fn acquire(&self) {
        let (lock, cv) = &self.inflight;
        let mut n = lock.lock().expect("inflight lock");
        while *n >= self.cfg.max_inflight.max(1) {
            n = cv.wait(n).expect("inflight lock");
        }
        *n += 1;
    }

    fn release(&self) {
        let (lock, cv) = &self.inflight;
        *lock.lock().expect("inflight lock") -= 1;
        cv.notify_one();
    }

    fn once(&self, messages: &[Message]) -> Result<String, Failure> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        });
        let mut req = self.client.post(&self.cfg.endpoint).json(&body);
        if let Ok(key) = std::env::var(&self.cfg.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}")));
        }
        let v: serde_json::Value = resp.json().map_err(|e| Failure::Fatal(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| Failure::Fatal("response has no choices[0].message.content".into()))
    }
}

impl Provider for HttpProvider {
    fn complete(&self, key: &RequestKey, messages: &[Message]) -> Result<String, ProviderError> {
        let attempts = self.cfg.retries.max(1);
        let mut last = String::new();
        for i in 0..attempts {
            if i > 0 {
                let base = self.cfg.retry_base_ms << (i - 1);
                let jitter = self.rng.lock().expect("rng lock").gen_range(0..=base / 2);
                std::thread::sleep(Duration::from_millis(base + jitter));
            }
            self.acquire();
            let r = self.once(messages);
            self.release();
            match r {
                Ok(text) => {
                    self.rec.push(TranscriptRecord {
                        key: key.clone(),
                        request_digest: request_digest(messages),
                        response: text.clone(),
                    })?;
                    return Ok(text);
                }
                Err(Failure::Transient(e)) => last = e,
                Err(Failure::Fatal(e)) => return Err(ProviderError::Transport(e)),
            }
        }
        Err(ProviderError::Transport(format!("{last} after {attempts} attempts")))
    }

    fn records(&self) -> Vec<TranscriptRecord> {
        self.rec.all()
    }
}
