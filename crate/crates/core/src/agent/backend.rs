use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::hash::json_sha256;

/// Environment variable holding the remote endpoint key.
pub const API_KEY_ENV: &str = "CONTRACTOR_API_KEY";

/// One chat completion call. `layer`, `role` and `task` key the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub layer: u32,
    pub role: String,
    pub task: String,
    pub model: String,
    pub temperature: f64,
    pub system: String,
    pub user: String,
}

impl CompletionRequest {
    /// Hash over everything the model sees.
    pub fn sha256(&self) -> String {
        json_sha256(&json!({
            "model": self.model,
            "temperature": self.temperature,
            "system": self.system,
            "user": self.user,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum BackendError {
    #[error("no transcript entry for layer {layer}, role {role}, task {task}")]
    MissingTranscriptEntry { layer: u32, role: String, task: String },
    #[error("transcript entry for layer {layer}, role {role}, task {task} was recorded for a different request")]
    RequestMismatch { layer: u32, role: String, task: String },
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network failure: {0}")]
    Network(String),
    #[error("malformed completion: {0}")]
    Malformed(String),
    #[error("recorded failure: {0}")]
    Recorded(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Produces raw model text for a request. Implementations are shared across
/// the dispatches of a layer.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub layer: u32,
    pub role: String,
    pub task: String,
    #[serde(default)]
    pub request_sha256: Option<String>,
    #[serde(default)]
    pub response: String,
    /// A failed call: `timeout` or a free-form message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

type Key = (u32, String, String);

/// Replays a transcript. Records that carry a request hash only answer
/// requests with that exact hash.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    records: BTreeMap<Key, TranscriptRecord>,
}

impl ScriptedBackend {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Result<Self, BackendError> {
        let mut map = BTreeMap::new();
        for r in records {
            let key = (r.layer, r.role.clone(), r.task.clone());
            if map.insert(key, r.clone()).is_some() {
                return Err(BackendError::Transcript(format!(
                    "duplicate entry for layer {}, role {}, task {}",
                    r.layer, r.role, r.task
                )));
            }
        }
        Ok(Self { records: map })
    }

    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: TranscriptRecord =
                serde_json::from_str(line).map_err(|e| BackendError::Transcript(format!("line {}: {e}", n + 1)))?;
            records.push(r);
        }
        Self::from_records(records)
    }

    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        let file = File::open(path).map_err(|e| BackendError::Transcript(format!("{}: {e}", path.display())))?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| BackendError::Transcript(e.to_string()))?;
            text.push_str(&line);
            text.push('\n');
        }
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let key = (req.layer, req.role.clone(), req.task.clone());
        let record = self.records.get(&key).ok_or_else(|| BackendError::MissingTranscriptEntry {
            layer: req.layer,
            role: req.role.clone(),
            task: req.task.clone(),
        })?;
        if let Some(hash) = &record.request_sha256 {
            if *hash != req.sha256() {
                return Err(BackendError::RequestMismatch {
                    layer: req.layer,
                    role: req.role.clone(),
                    task: req.task.clone(),
                });
            }
        }
        match record.error.as_deref() {
            Some("timeout") => Err(BackendError::Timeout(format!("scripted timeout for {}", req.task))),
            Some(msg) => Err(BackendError::Recorded(msg.to_string())),
            None => Ok(record.response.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL up to and excluding `/chat/completions`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub retries: u32,
    pub timeout: Duration,
    pub retry_delay: Duration,
}

impl RemoteConfig {
    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retries: 2,
            timeout: Duration::from_secs(120),
            retry_delay: Duration::from_millis(500),
        }
    }
}

/// Chat-completion style HTTP endpoint.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn attempt(&self, req: &CompletionRequest) -> Result<String, (BackendError, bool)> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = json!({
            "model": req.model,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
        });
        let mut call = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(t) => (BackendError::Timeout(t.to_string()), true),
            ureq::Error::BadUri(u) => (BackendError::Config(format!("bad url {u}")), false),
            other => (BackendError::Network(other.to_string()), true),
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| (BackendError::Network(e.to_string()), true))?;
        if status != 200 {
            let retry = status == 429 || status >= 500;
            return Err((BackendError::Http { status, body: text }, retry));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| (BackendError::Malformed(e.to_string()), false))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| (BackendError::Malformed("missing choices[0].message.content".into()), false))
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let mut tries = 0;
        loop {
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err((err, retry)) if retry && tries < self.config.retries => {
                    tries += 1;
                    tracing::warn!(task = %req.task, attempt = tries, error = %err, "retrying completion");
                    std::thread::sleep(self.config.retry_delay);
                }
                Err((err, _)) => return Err(err),
            }
        }
    }
}

/// Forwards to another backend and appends every call to a transcript.
pub struct RecordingBackend {
    inner: Box<dyn Backend>,
    sink: Mutex<File>,
}

impl RecordingBackend {
    pub fn new(inner: Box<dyn Backend>, transcript: &Path) -> Result<Self, BackendError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(transcript)
            .map_err(|e| BackendError::Transcript(format!("{}: {e}", transcript.display())))?;
        Ok(Self { inner, sink: Mutex::new(file) })
    }
}

impl Backend for RecordingBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let result = self.inner.complete(req);
        let (response, error) = match &result {
            Ok(text) => (text.clone(), None),
            Err(BackendError::Timeout(_)) => (String::new(), Some("timeout".to_string())),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        let record = TranscriptRecord {
            layer: req.layer,
            role: req.role.clone(),
            task: req.task.clone(),
            request_sha256: Some(req.sha256()),
            response,
            error,
        };
        let line = serde_json::to_string(&record).expect("record serializes");
        let mut file = self.sink.lock().map_err(|_| BackendError::Transcript("recorder poisoned".into()))?;
        writeln!(file, "{line}").map_err(|e| BackendError::Transcript(e.to_string()))?;
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn req(layer: u32, task: &str) -> CompletionRequest {
        CompletionRequest {
            layer,
            role: "worker".into(),
            task: task.into(),
            model: "m".into(),
            temperature: 0.0,
            system: "s".into(),
            user: "u".into(),
        }
    }

    fn record(layer: u32, task: &str, response: &str) -> TranscriptRecord {
        TranscriptRecord {
            layer,
            role: "worker".into(),
            task: task.into(),
            request_sha256: None,
            response: response.into(),
            error: None,
        }
    }

    #[test]
    fn scripted_lookup() {
        let b = ScriptedBackend::from_records([record(1, "a.py", "hello")]).unwrap();
        assert_eq!(b.complete(&req(1, "a.py")).unwrap(), "hello");
        assert!(matches!(b.complete(&req(2, "a.py")), Err(BackendError::MissingTranscriptEntry { layer: 2, .. })));
    }

    #[test]
    fn scripted_hash_and_errors() {
        let mut r = record(1, "a.py", "x");
        r.request_sha256 = Some("00".into());
        let mut t = record(1, "b.py", "");
        t.error = Some("timeout".into());
        let b = ScriptedBackend::from_records([r, t]).unwrap();
        assert!(matches!(b.complete(&req(1, "a.py")), Err(BackendError::RequestMismatch { .. })));
        assert!(matches!(b.complete(&req(1, "b.py")), Err(BackendError::Timeout(_))));
        assert!(ScriptedBackend::from_records([record(1, "a", ""), record(1, "a", "")]).is_err());
    }

    #[test]
    fn recording_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let inner = ScriptedBackend::from_records([record(1, "a.py", "hello")]).unwrap();
        let rec = RecordingBackend::new(Box::new(inner), &path).unwrap();
        assert_eq!(rec.complete(&req(1, "a.py")).unwrap(), "hello");
        assert!(rec.complete(&req(3, "zzz")).is_err());
        let replay = ScriptedBackend::from_path(&path).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(replay.complete(&req(1, "a.py")).unwrap(), "hello");
        let mut other = req(1, "a.py");
        other.user = "changed".into();
        assert!(matches!(replay.complete(&other), Err(BackendError::RequestMismatch { .. })));
    }

    /// Serves canned HTTP responses in order, one per connection.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(end) = text.find("\r\n\r\n") {
                        let len = text[..end]
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= end + 4 + len {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), hits)
    }

    fn remote(url: String) -> RemoteBackend {
        RemoteBackend::new(RemoteConfig {
            base_url: url,
            api_key: Some("k".into()),
            retries: 2,
            timeout: Duration::from_secs(5),
            retry_delay: Duration::from_millis(1),
        })
    }

    #[test]
    fn remote_retries_server_errors() {
        let ok = r#"{"choices":[{"message":{"content":"<output>hi</output>"}}]}"#.to_string();
        let (url, hits) = serve(vec![(500, "{}".into()), (500, "{}".into()), (200, ok)]);
        assert_eq!(remote(url).complete(&req(1, "a")).unwrap(), "<output>hi</output>");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn remote_gives_up_after_retries() {
        let (url, hits) = serve(vec![(503, "a".into()), (503, "b".into()), (503, "c".into())]);
        let err = remote(url).complete(&req(1, "a")).unwrap_err();
        assert_eq!(err, BackendError::Http { status: 503, body: "c".into() });
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn remote_does_not_retry_client_errors() {
        let (url, hits) = serve(vec![(400, "bad".into())]);
        assert!(matches!(remote(url).complete(&req(1, "a")), Err(BackendError::Http { status: 400, .. })));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }
}
