//! Executes prompts against a completions backend with a content-addressed
//! cache, retries and bounded concurrency.

mod backend;
mod cache;

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{
    parse_completion_body, Backend, BackendError, CompletionRequest, CompletionResponse, HttpBackend,
    ReplayBackend, RequestLogEntry, API_KEY_ENV,
};
pub use cache::GenerationCache;

use crate::error::{Error, Result};
use crate::packer::{Family, PromptSpec};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub samples: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            top_p: 0.95,
            max_tokens: 32_768,
            samples: 8,
        }
    }
}

impl DecodeParams {
    pub fn for_family(family: Family) -> Self {
        Self {
            max_tokens: family.default_max_tokens(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            errs.push(format!("temperature {} must be >= 0", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            errs.push(format!("top_p {} must be in (0, 1]", self.top_p));
        }
        if self.max_tokens == 0 {
            errs.push("max_tokens must be positive".into());
        }
        if self.samples == 0 {
            errs.push("samples must be positive".into());
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt_id: String,
    pub sample_index: u32,
    pub raw_text: String,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub usage: Usage,
    pub params: DecodeParams,
    pub endpoint_model: String,
    pub created_at: String,
}

impl GenerationRecord {
    pub fn truncated(&self) -> bool {
        self.finish_reason == FinishReason::Length
    }

    pub fn context_overflow(&self) -> bool {
        self.error.as_deref() == Some("context_overflow")
    }
}

/// Stable hash over everything that determines a sample.
pub fn cache_key(spec: &PromptSpec, params: &DecodeParams, sample_index: u32, endpoint_model: &str) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(spec.rendered.as_bytes());
    field(&params.temperature.to_bits().to_le_bytes());
    field(&params.top_p.to_bits().to_le_bytes());
    field(&params.max_tokens.to_le_bytes());
    field(&sample_index.to_le_bytes());
    field(endpoint_model.as_bytes());
    hex::encode(h.finalize())
}

/// Delays between attempts; `delays.len()` is the retry count.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            delays: [1, 4, 16].into_iter().map(Duration::from_secs).collect(),
        }
    }
}

impl RetryPolicy {
    /// Same retry count with no waiting.
    pub fn immediate(retries: usize) -> Self {
        Self {
            delays: vec![Duration::ZERO; retries],
        }
    }
}

pub struct Sampler {
    backend: Arc<dyn Backend>,
    cache: GenerationCache,
    model: String,
    retry: RetryPolicy,
    clock: fn() -> String,
    requests: AtomicUsize,
    cache_hits: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptProgress {
    pub prompt_id: String,
    pub status: PromptStatus,
    pub completed: u32,
    pub errors: u32,
    pub usage: Usage,
}

/// Progress record of one sampling run; written before any request is
/// issued and rewritten when the run ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub model: String,
    pub params: DecodeParams,
    pub budget: usize,
    pub prompts: Vec<PromptProgress>,
    pub total_usage: Usage,
    pub requests_issued: usize,
    pub cache_hits: usize,
    pub wall_time_secs: f64,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub interrupted: bool,
}

#[derive(Debug)]
pub struct PlanRun {
    pub manifest: SampleManifest,
    /// In plan order, then sample index; samples skipped by an interrupt are absent.
    pub records: Vec<GenerationRecord>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

impl Sampler {
    pub fn new(backend: Arc<dyn Backend>, cache: GenerationCache, model: impl Into<String>) -> Self {
        Self {
            backend,
            cache,
            model: model.into(),
            retry: RetryPolicy::default(),
            clock: now,
            requests: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Replaces the source of `created_at` stamps.
    pub fn with_clock(mut self, clock: fn() -> String) -> Self {
        self.clock = clock;
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn cache(&self) -> &GenerationCache {
        &self.cache
    }

    pub fn requests_issued(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn key(&self, spec: &PromptSpec, params: &DecodeParams, sample_index: u32) -> String {
        cache_key(spec, params, sample_index, &self.model)
    }

    /// All `params.samples` records for one prompt.
    pub fn sample(&self, spec: &PromptSpec, params: &DecodeParams) -> Result<Vec<GenerationRecord>> {
        (0..params.samples).map(|i| self.sample_one(spec, params, i)).collect()
    }

    /// One sample, served from cache when present. Exhausted retries yield
    /// an error record, which is not cached so a rerun tries again.
    pub fn sample_one(&self, spec: &PromptSpec, params: &DecodeParams, sample_index: u32) -> Result<GenerationRecord> {
        let key = self.key(spec, params, sample_index);
        if let Some(rec) = self.cache.get(&key)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(rec);
        }
        let request = CompletionRequest {
            model: self.model.clone(),
            prompt: spec.rendered.clone(),
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
            n: 1,
        };
        let mut attempt = 0;
        let outcome = loop {
            self.requests.fetch_add(1, Ordering::SeqCst);
            match self.backend.complete(&key, &request) {
                Ok(r) => break Ok(r),
                Err(e) if e.retryable() && attempt < self.retry.delays.len() => {
                    log::debug!("retrying {key} after {e}");
                    std::thread::sleep(self.retry.delays[attempt]);
                    attempt += 1;
                }
                Err(e) => break Err(e),
            }
        };
        let mut rec = GenerationRecord {
            prompt_id: spec.prompt_id.clone(),
            sample_index,
            raw_text: String::new(),
            finish_reason: FinishReason::Error,
            error: None,
            usage: Usage::default(),
            params: params.clone(),
            endpoint_model: self.model.clone(),
            created_at: (self.clock)(),
        };
        match outcome {
            Ok(resp) => {
                rec.raw_text = resp.text;
                rec.finish_reason = resp.finish_reason;
                rec.usage = resp.usage;
                rec.usage.completion_tokens = rec.usage.completion_tokens.min(u64::from(params.max_tokens));
                self.cache.put(&key, &rec)?;
            }
            Err(e) => {
                log::warn!("sample {} of {} failed: {e}", sample_index, spec.prompt_id);
                rec.error = Some(e.tag());
            }
        }
        Ok(rec)
    }

    /// Samples every prompt of a plan with at most `budget` requests in
    /// flight. The manifest is written to `manifest_path` before any request
    /// and again at the end. Setting `cancel` stops new requests; completed
    /// samples stay cached, so a rerun only requests what is missing.
    pub fn run_plan(
        &self,
        plan: &[PromptSpec],
        params: &DecodeParams,
        budget: usize,
        manifest_path: Option<&Path>,
        cancel: Option<&AtomicBool>,
    ) -> Result<PlanRun> {
        if plan.is_empty() {
            return Err(Error::EmptyPlan);
        }
        let errs = params.validate();
        if !errs.is_empty() {
            return Err(Error::InvalidConfig(errs));
        }
        let started = Instant::now();
        let requests_before = self.requests_issued();
        let hits_before = self.cache_hits.load(Ordering::SeqCst);
        let mut manifest = SampleManifest {
            model: self.model.clone(),
            params: params.clone(),
            budget,
            prompts: plan
                .iter()
                .map(|p| PromptProgress {
                    prompt_id: p.prompt_id.clone(),
                    status: PromptStatus::Pending,
                    completed: 0,
                    errors: 0,
                    usage: Usage::default(),
                })
                .collect(),
            total_usage: Usage::default(),
            requests_issued: 0,
            cache_hits: 0,
            wall_time_secs: 0.0,
            started_at: now(),
            finished_at: None,
            interrupted: false,
        };
        if let Some(path) = manifest_path {
            write_json(path, &manifest)?;
        }

        let jobs: Vec<(usize, u32)> = (0..plan.len())
            .flat_map(|p| (0..params.samples).map(move |s| (p, s)))
            .collect();
        let results = par::map_bounded(&jobs, budget, |&(p, s)| {
            if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                return None;
            }
            Some(self.sample_one(&plan[p], params, s))
        });

        let mut records = Vec::with_capacity(results.len());
        for (&(p, _), r) in jobs.iter().zip(results) {
            let Some(r) = r else {
                manifest.interrupted = true;
                continue;
            };
            let rec = r?;
            let prog = &mut manifest.prompts[p];
            if rec.finish_reason == FinishReason::Error {
                prog.errors += 1;
            } else {
                prog.completed += 1;
            }
            prog.usage += rec.usage;
            manifest.total_usage += rec.usage;
            records.push(rec);
        }
        for prog in &mut manifest.prompts {
            prog.status = if prog.completed == params.samples {
                PromptStatus::Done
            } else if prog.completed + prog.errors == params.samples {
                PromptStatus::Failed
            } else {
                PromptStatus::Pending
            };
        }
        manifest.requests_issued = self.requests_issued() - requests_before;
        manifest.cache_hits = self.cache_hits.load(Ordering::SeqCst) - hits_before;
        manifest.wall_time_secs = started.elapsed().as_secs_f64();
        manifest.finished_at = Some(now());
        if let Some(path) = manifest_path {
            write_json(path, &manifest)?;
        }
        Ok(PlanRun { manifest, records })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::QuestionRecord;
    use crate::packer::{pack, PackOptions};
    use std::sync::Mutex;

    fn spec(text: &str) -> PromptSpec {
        let q = QuestionRecord {
            id: "q".into(),
            text: text.into(),
            gold_answer: "1".into(),
            dataset: "d".into(),
            level: None,
            subject: None,
            choices: None,
        };
        pack(&[&q], Family::Qwen3, &PackOptions::default()).unwrap()
    }

    #[test]
    fn cache_key_properties() {
        let p = DecodeParams::default();
        let s = spec("1+1=?");
        assert_eq!(cache_key(&s, &p, 0, "m"), cache_key(&s, &p, 0, "m"));
        assert_ne!(cache_key(&s, &p, 0, "m"), cache_key(&s, &p, 1, "m"));
        assert_ne!(cache_key(&s, &p, 0, "m"), cache_key(&spec("1+2=?"), &p, 0, "m"));
        assert_ne!(cache_key(&s, &p, 0, "m"), cache_key(&s, &p, 0, "m2"));
        let hotter = DecodeParams {
            temperature: 0.7,
            ..p.clone()
        };
        assert_ne!(cache_key(&s, &p, 0, "m"), cache_key(&s, &hotter, 0, "m"));
    }

    #[test]
    fn defaults() {
        let p = DecodeParams::default();
        assert_eq!((p.temperature, p.top_p, p.samples, p.max_tokens), (0.6, 0.95, 8, 32_768));
        assert_eq!(DecodeParams::for_family(Family::R1Distill).max_tokens, 16_384);
        assert!(p.validate().is_empty());
        let bad = DecodeParams {
            top_p: 0.0,
            samples: 0,
            ..p
        };
        assert_eq!(bad.validate().len(), 2);
    }

    /// Fails with the queued errors, then succeeds.
    struct Flaky {
        errors: Mutex<Vec<BackendError>>,
        calls: AtomicUsize,
    }

    impl Backend for Flaky {
        fn complete(&self, _key: &str, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if let Some(e) = self.errors.lock().unwrap().pop() {
                return Err(e);
            }
            Ok(CompletionResponse {
                text: format!("<think>ok</think>{}", req.prompt.len()),
                finish_reason: FinishReason::Stop,
                usage: Usage {
                    prompt_tokens: 5,
                    completion_tokens: 99_999,
                },
            })
        }
    }

    fn flaky(errors: Vec<BackendError>) -> Arc<Flaky> {
        Arc::new(Flaky {
            errors: Mutex::new(errors),
            calls: AtomicUsize::new(0),
        })
    }

    #[test]
    fn retries_then_succeeds_and_caches() {
        let dir = tempfile::tempdir().unwrap();
        let backend = flaky(vec![
            BackendError::Status { code: 503, body: String::new() },
            BackendError::Transport("reset".into()),
        ]);
        let sampler = Sampler::new(backend.clone(), GenerationCache::new(dir.path()), "m")
            .with_retry(RetryPolicy::immediate(3));
        let params = DecodeParams {
            samples: 1,
            max_tokens: 100,
            ..DecodeParams::default()
        };
        let recs = sampler.sample(&spec("x"), &params).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].finish_reason, FinishReason::Stop);
        assert_eq!(recs[0].usage.completion_tokens, 100);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);

        let again = sampler.sample(&spec("x"), &params).unwrap();
        assert_eq!(again, recs);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_give_error_records() {
        let dir = tempfile::tempdir().unwrap();
        let errs = (0..100).map(|_| BackendError::Transport("down".into())).collect();
        let backend = flaky(errs);
        let sampler = Sampler::new(backend.clone(), GenerationCache::new(dir.path()), "m")
            .with_retry(RetryPolicy::immediate(3));
        let recs = sampler.sample(&spec("x"), &DecodeParams::default()).unwrap();
        assert_eq!(recs.len(), 8);
        assert!(recs.iter().all(|r| r.finish_reason == FinishReason::Error));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 8 * 4);
        assert_eq!(sampler.cache().len().unwrap(), 0);
    }

    #[test]
    fn context_overflow_is_not_retried() {
        let dir = tempfile::tempdir().unwrap();
        let backend = flaky(vec![BackendError::ContextOverflow("too long".into())]);
        let sampler = Sampler::new(backend.clone(), GenerationCache::new(dir.path()), "m");
        let params = DecodeParams {
            samples: 1,
            ..DecodeParams::default()
        };
        let rec = &sampler.sample(&spec("x"), &params).unwrap()[0];
        assert!(rec.context_overflow());
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn empty_plan_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let sampler = Sampler::new(flaky(vec![]), GenerationCache::new(dir.path()), "m");
        assert!(matches!(
            sampler.run_plan(&[], &DecodeParams::default(), 1, None, None),
            Err(Error::EmptyPlan)
        ));
    }

    #[test]
    fn unwritable_manifest_aborts_before_requests() {
        let dir = tempfile::tempdir().unwrap();
        let backend = flaky(vec![]);
        let sampler = Sampler::new(backend.clone(), GenerationCache::new(dir.path()), "m");
        let bad = dir.path().join("missing-dir").join("manifest.json");
        let res = sampler.run_plan(&[spec("x")], &DecodeParams::default(), 2, Some(&bad), None);
        assert!(matches!(res, Err(Error::Io { .. })));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);
    }
}
