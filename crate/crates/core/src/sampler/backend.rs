use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{FinishReason, Usage};

/// Body of a raw completions request. One sample per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub n: u32,
}

/// What a backend returns for a successful request; also the on-disk form
/// of a replay fixture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("context_overflow: {0}")]
    ContextOverflow(String),
    #[error("no replay entry for key {0}")]
    MissingReplay(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl BackendError {
    /// Transport errors, 5xx and 429 are retried; other 4xx are not.
    pub fn retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }

    /// Short tag stored on error records.
    pub fn tag(&self) -> String {
        match self {
            BackendError::ContextOverflow(_) => "context_overflow".into(),
            other => other.to_string(),
        }
    }
}

pub trait Backend: Send + Sync {
    /// `key` is the cache key of the sample being requested.
    fn complete(&self, key: &str, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

/// OpenAI-compatible `POST <base>/v1/completions`.
pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

pub const API_KEY_ENV: &str = "COTPACK_API_KEY";

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }

    /// Reads the API key from [`API_KEY_ENV`], falling back to `OPENAI_API_KEY`.
    pub fn from_env(base_url: &str, timeout: Duration) -> Self {
        let key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok();
        Self::new(base_url, key, timeout)
    }

    pub fn endpoint(&self) -> String {
        if self.base_url.ends_with("/v1") {
            format!("{}/completions", self.base_url)
        } else {
            format!("{}/v1/completions", self.base_url)
        }
    }
}

fn is_context_overflow(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("context length") || b.contains("maximum context") || b.contains("context_length_exceeded")
}

/// Extracts text, finish reason and usage from a completions response body.
pub fn parse_completion_body(body: &str) -> Result<CompletionResponse, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let choice = v
        .pointer("/choices/0")
        .ok_or_else(|| BackendError::Malformed("no choices".into()))?;
    let text = choice
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("choice has no text".into()))?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        _ => FinishReason::Stop,
    };
    let num = |p: &str| v.pointer(p).and_then(Value::as_u64).unwrap_or(0);
    Ok(CompletionResponse {
        text,
        finish_reason,
        usage: Usage {
            prompt_tokens: num("/usage/prompt_tokens"),
            completion_tokens: num("/usage/completion_tokens"),
        },
    })
}

impl Backend for HttpBackend {
    fn complete(&self, _key: &str, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = serde_json::to_string(request).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let mut req = self.agent.post(self.endpoint()).content_type("application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = req
            .send(body.as_str())
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let code = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if code == 400 && is_context_overflow(&text) {
            return Err(BackendError::ContextOverflow(text));
        }
        if !(200..300).contains(&code) {
            return Err(BackendError::Status { code, body: text });
        }
        parse_completion_body(&text)
    }
}

#[derive(Debug, Clone)]
pub struct RequestLogEntry {
    pub key: String,
    pub started: Instant,
    pub finished: Instant,
}

/// Serves responses from `<dir>/<cache_key>.json` and logs every request.
pub struct ReplayBackend {
    dir: PathBuf,
    latency: Duration,
    log: Mutex<Vec<RequestLogEntry>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            latency: Duration::ZERO,
            log: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Sleeps this long inside every request.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn request_log(&self) -> Vec<RequestLogEntry> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn store(&self, key: &str, response: &CompletionResponse) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let json = serde_json::to_string_pretty(response)?;
        fs::write(self.entry_path(key), json + "\n")
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, key: &str, _request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let started = Instant::now();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let result = fs::read_to_string(self.entry_path(key))
            .map_err(|_| BackendError::MissingReplay(key.to_string()))
            .and_then(|raw| serde_json::from_str(&raw).map_err(|e| BackendError::Malformed(e.to_string())));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.log.lock().expect("log lock").push(RequestLogEntry {
            key: key.to_string(),
            started,
            finished: Instant::now(),
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_openai_body() {
        let body = r#"{"id":"x","choices":[{"index":0,"text":"<think>a</think>b","finish_reason":"length"}],"usage":{"prompt_tokens":12,"completion_tokens":34}}"#;
        let r = parse_completion_body(body).unwrap();
        assert_eq!(r.text, "<think>a</think>b");
        assert_eq!(r.finish_reason, FinishReason::Length);
        assert_eq!(r.usage.completion_tokens, 34);
        assert!(matches!(parse_completion_body("{}"), Err(BackendError::Malformed(_))));
    }

    #[test]
    fn retry_classification() {
        assert!(BackendError::Transport("reset".into()).retryable());
        assert!(BackendError::Status { code: 503, body: String::new() }.retryable());
        assert!(BackendError::Status { code: 429, body: String::new() }.retryable());
        assert!(!BackendError::Status { code: 404, body: String::new() }.retryable());
        assert!(!BackendError::ContextOverflow(String::new()).retryable());
        assert!(is_context_overflow("This model's maximum context length is 32768 tokens"));
    }

    #[test]
    fn endpoint_paths() {
        let b = HttpBackend::new("http://localhost:8000/", None, Duration::from_secs(1));
        assert_eq!(b.endpoint(), "http://localhost:8000/v1/completions");
        let b = HttpBackend::new("http://h/v1", None, Duration::from_secs(1));
        assert_eq!(b.endpoint(), "http://h/v1/completions");
    }
}
