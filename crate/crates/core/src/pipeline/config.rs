use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::Lexicon;
use crate::curator::{SftFormat, TargetKind, TruncationPolicy, DEFAULT_TOKEN_EDGES};
use crate::error::{Error, Result};
use crate::ingest::SchemaOptions;
use crate::packer::{Condition, Family};
use crate::parser::TokenCounter;
use crate::sampler::DecodeParams;

/// Every setting of a run. Defaults are filled in by `materialize`, so the
/// snapshot stored with a run is complete.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub plan: PlanConfig,
    pub sample: SampleConfig,
    pub parse: ParseConfig,
    pub verify: VerifyConfig,
    pub curate: CurateConfig,
    pub analyze: AnalyzeConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    pub schema: SchemaOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// Independent random groups.
    #[default]
    Batches,
    /// One shuffled pass over the corpus.
    Cover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub n: usize,
    pub groups: usize,
    pub seed: u64,
    pub family: Family,
    /// `multi-<n>` when absent.
    pub condition: Option<Condition>,
    pub mode: PlanMode,
    pub single_prefix: bool,
    pub templates_dir: Option<PathBuf>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            n: 3,
            groups: 100,
            seed: 0,
            family: Family::Qwen3,
            condition: None,
            mode: PlanMode::Batches,
            single_prefix: false,
            templates_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub budget: usize,
    pub replay_dir: Option<PathBuf>,
    /// Defaults to `<root>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub temperature: f64,
    pub top_p: f64,
    /// Family default when absent.
    pub max_tokens: Option<u32>,
    pub samples: u32,
    pub retry_delays_secs: Vec<f64>,
    pub timeout_secs: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        let d = DecodeParams::default();
        Self {
            endpoint: None,
            model: "default".into(),
            budget: 8,
            replay_dir: None,
            cache_dir: None,
            temperature: d.temperature,
            top_p: d.top_p,
            max_tokens: None,
            samples: d.samples,
            retry_delays_secs: vec![1.0, 4.0, 16.0],
            timeout_secs: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParseConfig {
    /// `whitespace-approx` or `external:<vocabulary path>`.
    pub counter: String,
}

impl Default for ParseConfig {
    fn default() -> Self {
        Self {
            counter: "whitespace-approx".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-6,
            absolute_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurateConfig {
    pub format: SftFormat,
    pub targets: TargetKind,
    pub max_per_question: Option<usize>,
    pub truncation: TruncationPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub histogram_edges: Vec<f64>,
    pub lexicon: Lexicon,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            histogram_edges: DEFAULT_TOKEN_EDGES.to_vec(),
            lexicon: Lexicon::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&raw)
    }

    pub fn from_toml(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| Error::InvalidConfig(vec![e.to_string()]))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(vec![e.to_string()]))
    }

    /// Fills every optional setting that has a derived default.
    pub fn materialize(mut self) -> Self {
        if self.sample.max_tokens.is_none() {
            self.sample.max_tokens = Some(self.plan.family.default_max_tokens());
        }
        if self.plan.condition.is_none() {
            self.plan.condition = Some(Condition::MultiQuestion(self.plan.n));
        }
        self
    }

    pub fn condition(&self) -> Condition {
        self.plan.condition.unwrap_or(Condition::MultiQuestion(self.plan.n))
    }

    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams {
            temperature: self.sample.temperature,
            top_p: self.sample.top_p,
            max_tokens: self.sample.max_tokens.unwrap_or(self.plan.family.default_max_tokens()),
            samples: self.sample.samples,
        }
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.corpus.path.as_os_str().is_empty() {
            errs.push("corpus.path is required".into());
        }
        if self.plan.n == 0 {
            errs.push("plan.n must be at least 1".into());
        }
        if self.plan.groups == 0 && self.plan.mode == PlanMode::Batches {
            errs.push("plan.groups must be at least 1".into());
        }
        if let Some(Condition::MultiQuestion(k)) = self.plan.condition {
            if k != self.plan.n {
                errs.push(format!("plan.condition multi-{k} disagrees with plan.n = {}", self.plan.n));
            }
        }
        if self.sample.endpoint.is_none() && self.sample.replay_dir.is_none() {
            errs.push("sample stage needs sample.endpoint or sample.replay_dir".into());
        }
        if self.sample.budget == 0 {
            errs.push("sample.budget must be at least 1".into());
        }
        if self.sample.retry_delays_secs.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            errs.push("sample.retry_delays_secs must be non-negative".into());
        }
        errs.extend(self.decode_params().validate().into_iter().map(|e| format!("sample: {e}")));
        if let Err(e) = TokenCounter::from_spec(&self.parse.counter) {
            errs.push(format!("parse.counter: {e}"));
        }
        if !(self.verify.relative_tolerance >= 0.0 && self.verify.absolute_tolerance >= 0.0) {
            errs.push("verify tolerances must be non-negative".into());
        }
        if self.curate.max_per_question == Some(0) {
            errs.push("curate.max_per_question must be at least 1".into());
        }
        if self.analyze.histogram_edges.windows(2).any(|w| w[0] >= w[1]) {
            errs.push("analyze.histogram_edges must be strictly increasing".into());
        }
        for (cat, cues) in &self.analyze.lexicon.0 {
            if cues.iter().all(|c| c.trim().is_empty()) {
                errs.push(format!("analyze.lexicon.{cat:?} has no cues").to_lowercase());
            }
        }
        errs
    }

    /// Content hash of the materialized snapshot.
    pub fn run_id(&self) -> Result<String> {
        let snapshot = serde_json::to_vec(self)?;
        Ok(hex::encode(&Sha256::digest(&snapshot)[..8]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Config {
        Config::from_toml(
            r#"
            [corpus]
            path = "q.jsonl"
            [sample]
            replay_dir = "replay"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_materialize() {
        let c = minimal().materialize();
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        assert_eq!(c.sample.max_tokens, Some(32_768));
        assert_eq!(c.plan.condition, Some(Condition::MultiQuestion(3)));
        let back = Config::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.run_id().unwrap(), c.run_id().unwrap());
    }

    #[test]
    fn r1_gets_shorter_ceiling() {
        let mut c = minimal();
        c.plan.family = Family::R1Distill;
        assert_eq!(c.materialize().sample.max_tokens, Some(16_384));
    }

    #[test]
    fn all_problems_reported() {
        let c = Config::from_toml("[plan]\nn = 0\n[sample]\nbudget = 0\nsamples = 0").unwrap();
        let errs = c.validate();
        assert!(errs.len() >= 5, "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("plan.n")));
        assert!(errs.iter().any(|e| e.contains("corpus.path")));
        assert!(errs.iter().any(|e| e.contains("endpoint")));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Config::from_toml("[plan]\nnn = 3"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn run_id_tracks_settings() {
        let a = minimal().materialize();
        let mut b = a.clone();
        b.plan.seed = 1;
        assert_ne!(a.run_id().unwrap(), b.run_id().unwrap());
    }
}
