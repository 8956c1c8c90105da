//! Stage orchestration over a run directory.
//!
//! A run lives in `<root>/runs/<run_id>`, where the id hashes the
//! materialized config together with the corpus bytes. Each stage records
//! the hashes of its inputs and artifacts in `manifest.json`; a finished
//! stage whose inputs are unchanged is skipped, and every artifact is
//! re-hashed before a later stage reads it.

mod config;
mod manifest;
mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    AnalyzeConfig, Config, CorpusConfig, CurateConfig, ParseConfig, PlanConfig, PlanMode, SampleConfig, VerifyConfig,
};
pub use manifest::{sha256_file, Artifact, Funnel, RunManifest, Stage, StageRecord, StageState};
pub use report::{
    accuracy_summary, write_behavior, write_efficiency, write_run_reports, write_scaling, AccuracySummary,
    EfficiencySummary, RunData,
};

use crate::curator::{emit_sft, filter_correct, EmitOptions};
use crate::error::{Error, Result};
use crate::ingest::{load_corpus, parse_corpus, write_corpus, Corpus};
use crate::packer::{plan_batches, plan_controls, plan_cover, Condition, PackOptions, PromptSpec, TemplateSet};
use crate::parser::{parse_all, ParsedTrace, TokenCounter};
use crate::sampler::{Backend, GenerationCache, GenerationRecord, HttpBackend, ReplayBackend, RetryPolicy, Sampler};
use crate::verifier::{verify_traces, SegmentVerdict, Tolerance, Verifier};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut body = String::new();
    for it in items {
        body.push_str(&serde_json::to_string(it)?);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Whether a stage ran or was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Executed,
    Skipped,
}

/// Hooks used by tests and the CLI to steer sampling.
#[derive(Clone, Default)]
pub struct RunHooks {
    pub backend: Option<Arc<dyn Backend>>,
    pub cancel: Option<Arc<AtomicBool>>,
    pub clock: Option<fn() -> String>,
}

pub struct Pipeline {
    root: PathBuf,
    run_dir: PathBuf,
    manifest: RunManifest,
    hooks: RunHooks,
}

fn hash_parts(parts: &[(&str, String)]) -> String {
    let mut h = Sha256::new();
    for (k, v) in parts {
        h.update((k.len() as u64).to_le_bytes());
        h.update(k.as_bytes());
        h.update((v.len() as u64).to_le_bytes());
        h.update(v.as_bytes());
    }
    hex::encode(h.finalize())
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

/// Run directory for `run_id` under `root`.
pub fn run_dir(root: &Path, run_id: &str) -> PathBuf {
    root.join("runs").join(run_id)
}

impl Pipeline {
    /// Validates the config (reporting every problem at once), then opens or
    /// creates its run directory.
    pub fn open(root: &Path, config: Config, hooks: RunHooks) -> Result<Self> {
        let config = config.materialize();
        let mut errs = config.validate();
        let corpus_hash = if config.corpus.path.as_os_str().is_empty() {
            None
        } else {
            match sha256_file(&config.corpus.path) {
                Ok(h) => Some(h),
                Err(e) => {
                    errs.push(format!("corpus.path: {e}"));
                    None
                }
            }
        };
        if let Some(dir) = &config.sample.replay_dir {
            if !dir.is_dir() && hooks.backend.is_none() {
                errs.push(format!("sample.replay_dir {} is not a directory", dir.display()));
            }
        }
        if let Some(dir) = &config.plan.templates_dir {
            if let Err(e) = TemplateSet::with_overrides(dir) {
                errs.push(format!("plan.templates_dir: {e}"));
            }
        }
        if !errs.is_empty() {
            return Err(Error::InvalidConfig(errs));
        }
        let run_id = hash_parts(&[
            ("config", json(&config)?),
            ("corpus", corpus_hash.unwrap_or_default()),
        ])[..16]
            .to_string();
        let run_dir = run_dir(root, &run_id);
        fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
        let manifest_path = run_dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            RunManifest::load(&manifest_path)?
        } else {
            let m = RunManifest::new(run_id, config.clone());
            let snapshot = run_dir.join("config.toml");
            fs::write(&snapshot, config.to_toml()?).map_err(|e| Error::io(&snapshot, e))?;
            m.save(&manifest_path)?;
            m
        };
        Ok(Self {
            root: root.to_path_buf(),
            run_dir,
            manifest,
            hooks,
        })
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.run_dir.join(MANIFEST_FILE)
    }

    fn config(&self) -> &Config {
        &self.manifest.config
    }

    fn save(&self) -> Result<()> {
        self.manifest.save(&self.manifest_path())
    }

    /// Runs every stage up to and including `last`.
    pub fn run_through(&mut self, last: Stage) -> Result<Vec<(Stage, Outcome)>> {
        let mut out = Vec::new();
        for stage in Stage::ALL.into_iter().take_while(|s| *s <= last) {
            out.push((stage, self.run_stage(stage)?));
        }
        Ok(out)
    }

    pub fn run_all(&mut self) -> Result<Vec<(Stage, Outcome)>> {
        self.run_through(Stage::Analyze)
    }

    fn artifact(&self, stage: Stage, name: &str) -> Result<PathBuf> {
        self.manifest.verified_artifact(&self.run_dir, stage, name)
    }

    fn artifact_hash(&self, stage: Stage, name: &str) -> Result<String> {
        self.artifact(stage, name)?;
        Ok(self.manifest.stage(stage).artifacts[name].sha256.clone())
    }

    fn input_hash(&self, stage: Stage) -> Result<String> {
        let c = self.config();
        let mut parts: Vec<(&str, String)> = Vec::new();
        match stage {
            Stage::Ingest => {
                parts.push(("corpus-file", sha256_file(&c.corpus.path)?));
                parts.push(("config", json(&c.corpus)?));
            }
            Stage::Plan => {
                parts.push(("corpus", self.artifact_hash(Stage::Ingest, "corpus")?));
                parts.push(("config", json(&c.plan)?));
            }
            Stage::Sample => {
                parts.push(("plan", self.artifact_hash(Stage::Plan, "plan")?));
                parts.push(("config", json(&c.sample)?));
            }
            Stage::Parse => {
                parts.push(("plan", self.artifact_hash(Stage::Plan, "plan")?));
                parts.push(("generations", self.artifact_hash(Stage::Sample, "generations")?));
                parts.push(("config", json(&c.parse)?));
            }
            Stage::Verify => {
                parts.push(("corpus", self.artifact_hash(Stage::Ingest, "corpus")?));
                parts.push(("traces", self.artifact_hash(Stage::Parse, "traces")?));
                parts.push(("config", json(&c.verify)?));
            }
            Stage::Curate => {
                parts.push(("corpus", self.artifact_hash(Stage::Ingest, "corpus")?));
                parts.push(("traces", self.artifact_hash(Stage::Parse, "traces")?));
                parts.push(("verdicts", self.artifact_hash(Stage::Verify, "verdicts")?));
                parts.push(("config", json(&c.curate)?));
            }
            Stage::Analyze => {
                parts.push(("corpus", self.artifact_hash(Stage::Ingest, "corpus")?));
                parts.push(("plan", self.artifact_hash(Stage::Plan, "plan")?));
                parts.push(("traces", self.artifact_hash(Stage::Parse, "traces")?));
                parts.push(("verdicts", self.artifact_hash(Stage::Verify, "verdicts")?));
                parts.push(("config", json(&(&c.analyze, &c.parse, &c.verify, c.sample.samples))?));
            }
        }
        Ok(hash_parts(&parts))
    }

    /// Runs one stage whose upstream stages are done. A done stage with
    /// unchanged inputs is skipped.
    pub fn run_stage(&mut self, stage: Stage) -> Result<Outcome> {
        let fail = |e: Error| Error::Stage {
            stage: stage.to_string(),
            message: e.to_string(),
        };
        let input_hash = self.input_hash(stage).map_err(fail)?;
        let rec = self.manifest.stage(stage);
        if rec.state == StageState::Done {
            if rec.input_hash.as_deref() == Some(input_hash.as_str()) {
                log::info!("{stage}: up to date");
                return Ok(Outcome::Skipped);
            }
            return Err(fail(Error::Manifest(
                "inputs changed after the stage finished; start a new run".into(),
            )));
        }
        self.manifest.transition(stage, StageState::Running)?;
        self.save()?;
        log::info!("{stage}: running");
        match self.execute(stage) {
            Ok(artifacts) => {
                let mut recorded = BTreeMap::new();
                for (name, rel) in artifacts {
                    let sha256 = sha256_file(&self.run_dir.join(&rel))?;
                    recorded.insert(name, Artifact { path: rel, sha256 });
                }
                let rec = self.manifest.stages.get_mut(&stage).expect("all stages present");
                rec.artifacts = recorded;
                rec.input_hash = Some(input_hash);
                self.manifest.transition(stage, StageState::Done)?;
                self.save()?;
                Ok(Outcome::Executed)
            }
            Err(e) => {
                let message = e.to_string();
                let rec = self.manifest.stages.get_mut(&stage).expect("all stages present");
                rec.error = Some(message.clone());
                self.manifest.transition(stage, StageState::Failed)?;
                self.save()?;
                Err(Error::Stage {
                    stage: stage.to_string(),
                    message,
                })
            }
        }
    }

    fn execute(&mut self, stage: Stage) -> Result<Vec<(String, String)>> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Plan => self.plan(),
            Stage::Sample => self.sample(),
            Stage::Parse => self.parse(),
            Stage::Verify => self.verify(),
            Stage::Curate => self.curate(),
            Stage::Analyze => self.analyze(),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let path = self.artifact(Stage::Ingest, "corpus")?;
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(parse_corpus(&raw, &Default::default())?.corpus)
    }

    pub fn load_plan(&self) -> Result<Vec<PromptSpec>> {
        read_jsonl(&self.artifact(Stage::Plan, "plan")?)
    }

    pub fn load_generations(&self) -> Result<Vec<GenerationRecord>> {
        read_jsonl(&self.artifact(Stage::Sample, "generations")?)
    }

    pub fn load_traces(&self) -> Result<Vec<ParsedTrace>> {
        read_jsonl(&self.artifact(Stage::Parse, "traces")?)
    }

    pub fn load_verdicts(&self) -> Result<Vec<SegmentVerdict>> {
        read_jsonl(&self.artifact(Stage::Verify, "verdicts")?)
    }

    pub fn run_data(&self) -> Result<RunData> {
        Ok(RunData {
            run_id: self.manifest.run_id.clone(),
            config: self.config().clone(),
            corpus: self.load_corpus()?,
            plan: self.load_plan()?,
            traces: self.load_traces()?,
            verdicts: self.load_verdicts()?,
        })
    }

    fn ingest(&mut self) -> Result<Vec<(String, String)>> {
        let c = self.config();
        let report = load_corpus(&c.corpus.path, &c.corpus.schema)?;
        for e in &report.errors {
            log::warn!("corpus line {}: {}", e.line, e.message);
        }
        write_corpus(&report.corpus, &self.out("corpus.jsonl"))?;
        write_jsonl(&self.out("ingest_errors.jsonl"), &report.errors)?;
        Ok(vec![
            ("corpus".into(), "corpus.jsonl".into()),
            ("errors".into(), "ingest_errors.jsonl".into()),
        ])
    }

    fn pack_options(&self) -> Result<PackOptions> {
        let c = self.config();
        Ok(PackOptions {
            templates: match &c.plan.templates_dir {
                Some(d) => TemplateSet::with_overrides(d)?,
                None => TemplateSet::default(),
            },
            single_prefix: c.plan.single_prefix,
            ..PackOptions::default()
        })
    }

    fn plan(&mut self) -> Result<Vec<(String, String)>> {
        let corpus = self.load_corpus()?;
        let opts = self.pack_options()?;
        let p = &self.config().plan;
        let plan = match self.config().condition() {
            Condition::MultiQuestion(n) => match p.mode {
                PlanMode::Batches => plan_batches(&corpus, n, p.family, p.groups, p.seed, &opts)?,
                PlanMode::Cover => plan_cover(&corpus, n, p.family, p.seed, &opts)?,
            },
            control => plan_controls(&corpus, control, p.family, p.groups, p.seed, &opts)?,
        };
        self.manifest.funnel.prompts = plan.len();
        write_jsonl(&self.out("plan.jsonl"), &plan)?;
        Ok(vec![("plan".into(), "plan.jsonl".into())])
    }

    fn sampler(&self) -> Result<Sampler> {
        let s = &self.config().sample;
        let backend: Arc<dyn Backend> = match (&self.hooks.backend, &s.replay_dir, &s.endpoint) {
            (Some(b), _, _) => b.clone(),
            (None, Some(dir), _) => Arc::new(ReplayBackend::new(dir)),
            (None, None, Some(url)) => Arc::new(HttpBackend::from_env(url, Duration::from_secs(s.timeout_secs))),
            (None, None, None) => {
                return Err(Error::InvalidConfig(vec!["no endpoint or replay dir".into()]))
            }
        };
        let cache_dir = s.cache_dir.clone().unwrap_or_else(|| self.root.join("cache"));
        let retry = RetryPolicy {
            delays: s.retry_delays_secs.iter().map(|&d| Duration::from_secs_f64(d)).collect(),
        };
        let mut sampler = Sampler::new(backend, GenerationCache::new(cache_dir), s.model.clone()).with_retry(retry);
        if let Some(clock) = self.hooks.clock {
            sampler = sampler.with_clock(clock);
        }
        Ok(sampler)
    }

    fn sample(&mut self) -> Result<Vec<(String, String)>> {
        let plan = self.load_plan()?;
        let sampler = self.sampler()?;
        let params = self.config().decode_params();
        let run = sampler.run_plan(
            &plan,
            &params,
            self.config().sample.budget,
            Some(&self.out("sample_progress.json")),
            self.hooks.cancel.as_deref(),
        )?;
        if run.manifest.interrupted {
            return Err(Error::Manifest(format!(
                "interrupted after {} of {} samples",
                run.records.len(),
                plan.len() * params.samples as usize
            )));
        }
        self.manifest.funnel.samples = run
            .records
            .iter()
            .filter(|r| r.finish_reason != crate::sampler::FinishReason::Error)
            .count();
        write_jsonl(&self.out("generations.jsonl"), &run.records)?;
        Ok(vec![
            ("generations".into(), "generations.jsonl".into()),
            ("progress".into(), "sample_progress.json".into()),
        ])
    }

    fn counter(&self) -> Result<TokenCounter> {
        TokenCounter::from_spec(&self.config().parse.counter)
    }

    fn verifier(&self) -> Verifier {
        let v = &self.config().verify;
        Verifier::new(Tolerance::new(v.relative_tolerance, v.absolute_tolerance))
    }

    fn parse(&mut self) -> Result<Vec<(String, String)>> {
        let plan = self.load_plan()?;
        let gens = self.load_generations()?;
        let counter = self.counter()?;
        let by_id: BTreeMap<&str, &PromptSpec> = plan.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
        let traces = parse_all(&gens, |id| by_id.get(id).copied(), &counter);
        self.manifest.funnel.parsed_segments = traces
            .iter()
            .flat_map(|t| &t.segments)
            .filter(|s| !s.reasoning_text.trim().is_empty())
            .count();
        write_jsonl(&self.out("traces.jsonl"), &traces)?;
        Ok(vec![("traces".into(), "traces.jsonl".into())])
    }

    fn verify(&mut self) -> Result<Vec<(String, String)>> {
        let corpus = self.load_corpus()?;
        let traces = self.load_traces()?;
        let verdicts = verify_traces(&traces, &corpus, &self.verifier())?;
        let segments = traces.iter().flat_map(|t| &t.segments);
        self.manifest.funnel.correct_segments = segments
            .zip(&verdicts)
            .filter(|(s, v)| v.verdict.correct && !s.reasoning_text.trim().is_empty())
            .count();
        write_jsonl(&self.out("verdicts.jsonl"), &verdicts)?;
        Ok(vec![("verdicts".into(), "verdicts.jsonl".into())])
    }

    fn curate(&mut self) -> Result<Vec<(String, String)>> {
        let corpus = self.load_corpus()?;
        let traces = self.load_traces()?;
        let verdicts = self.load_verdicts()?;
        let c = &self.config().curate;
        let examples = filter_correct(&traces, &verdicts, &corpus, c.truncation)?;
        let opts = EmitOptions {
            format: c.format,
            targets: c.targets,
            max_per_question: c.max_per_question,
            templates: self.pack_options()?.templates,
            histogram_edges: self.config().analyze.histogram_edges.clone(),
        };
        let mut report = emit_sft(&examples, &opts, &self.out("curated.jsonl"))?;
        report.path = PathBuf::from("curated.jsonl");
        self.manifest.funnel.emitted = report.examples;
        crate::analytics::write_json(&self.out("curate_report.json"), &report)?;
        Ok(vec![
            ("curated".into(), "curated.jsonl".into()),
            ("report".into(), "curate_report.json".into()),
        ])
    }

    fn analyze(&mut self) -> Result<Vec<(String, String)>> {
        let data = self.run_data()?;
        let files = write_run_reports(&data, &self.out("analysis"))?;
        Ok(files
            .into_iter()
            .map(|f| (f.trim_end_matches(".json").to_string(), format!("analysis/{f}")))
            .collect())
    }
}

/// Finds a manifest from a path to it, its run directory, or a run id under
/// `root`.
pub fn locate_manifest(root: &Path, query: &str) -> Result<PathBuf> {
    let p = Path::new(query);
    let candidates = [
        p.to_path_buf(),
        p.join(MANIFEST_FILE),
        run_dir(root, query).join(MANIFEST_FILE),
    ];
    candidates
        .into_iter()
        .find(|c| c.is_file())
        .ok_or_else(|| Error::Manifest(format!("no run manifest found for {query:?}")))
}

/// Opens an existing run from its manifest without re-validating inputs.
pub fn open_existing(manifest_path: &Path) -> Result<(RunManifest, PathBuf)> {
    let m = RunManifest::load(manifest_path)?;
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((m, dir))
}

/// Loads the artifacts of a finished run, checking each hash.
pub fn load_run(manifest_path: &Path) -> Result<RunData> {
    let (m, dir) = open_existing(manifest_path)?;
    let art = |stage, name| m.verified_artifact(&dir, stage, name);
    let raw_corpus = art(Stage::Ingest, "corpus")?;
    let raw = fs::read_to_string(&raw_corpus).map_err(|e| Error::io(&raw_corpus, e))?;
    Ok(RunData {
        run_id: m.run_id.clone(),
        config: m.config.clone(),
        corpus: parse_corpus(&raw, &Default::default())?.corpus,
        plan: read_jsonl(&art(Stage::Plan, "plan")?)?,
        traces: read_jsonl(&art(Stage::Parse, "traces")?)?,
        verdicts: read_jsonl(&art(Stage::Verify, "verdicts")?)?,
    })
}

/// Human-readable stage table and funnel.
pub fn inspect(m: &RunManifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run {}", m.run_id);
    let _ = writeln!(s, "updated {}", m.updated_at);
    for (stage, rec) in &m.stages {
        let state = format!("{:?}", rec.state).to_lowercase();
        let _ = write!(s, "  {:<8} {:<8}", stage.as_str(), state);
        if rec.executions > 0 {
            let _ = write!(s, " runs={}", rec.executions);
        }
        if let Some(e) = &rec.error {
            let _ = write!(s, " error: {e}");
        }
        s.push('\n');
    }
    let f = &m.funnel;
    let _ = writeln!(s, "funnel");
    for (name, v) in [
        ("prompts", f.prompts),
        ("samples", f.samples),
        ("parsed segments", f.parsed_segments),
        ("correct segments", f.correct_segments),
        ("emitted examples", f.emitted),
    ] {
        let _ = writeln!(s, "  {name:<17} {v}");
    }
    s
}
