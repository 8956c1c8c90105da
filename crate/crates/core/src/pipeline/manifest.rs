use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Plan,
    Sample,
    Parse,
    Verify,
    Curate,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Plan,
        Stage::Sample,
        Stage::Parse,
        Stage::Verify,
        Stage::Curate,
        Stage::Analyze,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Plan => "plan",
            Stage::Sample => "sample",
            Stage::Parse => "parse",
            Stage::Verify => "verify",
            Stage::Curate => "curate",
            Stage::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(vec![format!("unknown stage {s:?}")]))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageState {
    #[default]
    Pending,
    Running,
    Done,
    Failed,
}

impl StageState {
    /// `Running -> Running` restarts a stage whose process died mid-way.
    fn can_become(self, next: StageState) -> bool {
        use StageState::*;
        matches!(
            (self, next),
            (Pending, Running) | (Failed, Running) | (Running, Running) | (Running, Done) | (Running, Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub state: StageState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_hash: Option<String>,
    #[serde(default)]
    pub artifacts: BTreeMap<String, Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub executions: u32,
}

/// Counts along the path from prompts to emitted examples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub prompts: usize,
    pub samples: usize,
    pub parsed_segments: usize,
    pub correct_segments: usize,
    pub emitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: Config,
    pub stages: BTreeMap<Stage, StageRecord>,
    #[serde(default)]
    pub funnel: Funnel,
    pub created_at: String,
    pub updated_at: String,
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(run_id: String, config: Config) -> Self {
        let t = now();
        Self {
            run_id,
            config,
            stages: Stage::ALL.into_iter().map(|s| (s, StageRecord::default())).collect(),
            funnel: Funnel::default(),
            created_at: t.clone(),
            updated_at: t,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    /// Writes through a temporary file so a crash never leaves a torn manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)? + "\n";
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn stage(&self, stage: Stage) -> &StageRecord {
        &self.stages[&stage]
    }

    pub fn transition(&mut self, stage: Stage, next: StageState) -> Result<()> {
        let rec = self.stages.entry(stage).or_default();
        if !rec.state.can_become(next) {
            return Err(Error::Manifest(format!(
                "stage {stage} cannot go from {:?} to {next:?}",
                rec.state
            )));
        }
        rec.state = next;
        match next {
            StageState::Running => {
                rec.started_at = Some(now());
                rec.finished_at = None;
                rec.error = None;
                rec.executions += 1;
            }
            StageState::Done | StageState::Failed => rec.finished_at = Some(now()),
            StageState::Pending => {}
        }
        self.updated_at = now();
        Ok(())
    }

    /// Recorded artifact, checked against the file on disk.
    pub fn verified_artifact(&self, run_dir: &Path, stage: Stage, name: &str) -> Result<std::path::PathBuf> {
        let rec = self.stage(stage);
        if rec.state != StageState::Done {
            return Err(Error::Manifest(format!("stage {stage} is not done")));
        }
        let art = rec
            .artifacts
            .get(name)
            .ok_or_else(|| Error::Manifest(format!("stage {stage} recorded no artifact {name:?}")))?;
        let path = run_dir.join(&art.path);
        let actual = sha256_file(&path)?;
        if actual != art.sha256 {
            return Err(Error::Manifest(format!(
                "artifact {} changed since stage {stage} finished",
                art.path
            )));
        }
        Ok(path)
    }
}
