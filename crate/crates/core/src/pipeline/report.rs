//! Statistics derived from the artifacts of one or more runs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::{
    accuracy, aggregate_profiles, efficiency_ratio, mean, scaling_summary, write_csv, write_json, AccuracyMode,
    AccuracyReport, BehaviorMatcher, BehaviorProfile, BenchmarkMetrics, EfficiencyStat, LengthObs, QuestionStat,
    RunMetrics, ScalingSummary,
};
use crate::error::Result;
use crate::ingest::Corpus;
use crate::packer::{PromptSpec, TOY_QUESTION_ID};
use crate::parser::{ParsedTrace, TokenCounter, TraceSegment};
use crate::verifier::{SegmentVerdict, Verifier};

use super::config::Config;

/// Artifacts of one run, loaded after their hashes were checked.
#[derive(Debug, Clone)]
pub struct RunData {
    pub run_id: String,
    pub config: Config,
    pub corpus: Corpus,
    pub plan: Vec<PromptSpec>,
    pub traces: Vec<ParsedTrace>,
    pub verdicts: Vec<SegmentVerdict>,
}

fn measured(s: &TraceSegment) -> bool {
    !s.reasoning_text.trim().is_empty() && s.question_id != TOY_QUESTION_ID
}

impl RunData {
    fn verdict_index(&self) -> HashMap<(&str, u32, usize), bool> {
        self.verdicts.iter().map(|v| (v.key(), v.verdict.correct)).collect()
    }

    /// Reasoning lengths of every non-empty segment, grouped by N.
    pub fn segment_lengths(&self) -> BTreeMap<usize, Vec<LengthObs>> {
        let mut groups: BTreeMap<usize, Vec<LengthObs>> = BTreeMap::new();
        for t in &self.traces {
            for s in t.segments.iter().filter(|s| measured(s)) {
                groups.entry(t.n).or_default().push(LengthObs {
                    question_id: s.question_id.clone(),
                    length: s.reasoning_tokens as f64,
                });
            }
        }
        groups
    }

    /// Per question, correctness by sample index in the first prompt that
    /// holds it. A sample without a verified segment counts as wrong.
    pub fn verdict_matrix(&self) -> BTreeMap<String, Vec<bool>> {
        let samples = self.config.sample.samples as usize;
        let index = self.verdict_index();
        let mut first_prompt: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
        for p in &self.plan {
            for (i, q) in p.question_ids.iter().enumerate() {
                if q != TOY_QUESTION_ID {
                    first_prompt.entry(q).or_insert((&p.prompt_id, i + 1));
                }
            }
        }
        first_prompt
            .into_iter()
            .map(|(q, (pid, pos))| {
                let row = (0..samples as u32)
                    .map(|s| index.get(&(pid, s, pos)).copied().unwrap_or(false))
                    .collect();
                (q.to_string(), row)
            })
            .collect()
    }

    pub fn accuracy(&self, mode: AccuracyMode) -> Result<AccuracyReport> {
        accuracy(&self.verdict_matrix(), mode)
    }

    /// Mean reasoning length and avg@k accuracy per question.
    pub fn question_stats(&self) -> Result<Vec<QuestionStat>> {
        let acc = self.accuracy(AccuracyMode::AvgAtK(self.config.sample.samples as usize))?;
        let mut lengths: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for t in &self.traces {
            for s in t.segments.iter().filter(|s| measured(s)) {
                lengths.entry(&s.question_id).or_default().push(s.reasoning_tokens as f64);
            }
        }
        Ok(acc
            .per_question
            .iter()
            .filter_map(|(q, a)| {
                let len = mean(lengths.get(q.as_str())?)?;
                Some(QuestionStat {
                    question_id: q.clone(),
                    length: len,
                    accuracy: Some(*a),
                })
            })
            .collect())
    }

    /// Accuracy (percent, avg@k) and token means per dataset.
    pub fn metrics(&self) -> Result<RunMetrics> {
        let stats = self.question_stats()?;
        let mut completion: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let specs: HashMap<&str, &PromptSpec> = self.plan.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
        for t in &self.traces {
            let Some(p) = specs.get(t.prompt_id.as_str()) else { continue };
            for q in &p.question_ids {
                completion
                    .entry(q)
                    .or_default()
                    .push(t.completion_tokens as f64 / p.n() as f64);
            }
        }
        let mut by_dataset: BTreeMap<String, Vec<&QuestionStat>> = BTreeMap::new();
        for s in &stats {
            if let Some(q) = self.corpus.get(&s.question_id) {
                by_dataset.entry(q.dataset.clone()).or_default().push(s);
            }
        }
        let benchmarks = by_dataset
            .into_iter()
            .map(|(d, ss)| {
                let accs: Vec<f64> = ss.iter().filter_map(|s| s.accuracy).collect();
                let lens: Vec<f64> = ss.iter().map(|s| s.length).collect();
                let comp: Vec<f64> = ss
                    .iter()
                    .filter_map(|s| mean(completion.get(s.question_id.as_str())?))
                    .collect();
                let m = BenchmarkMetrics {
                    acc: 100.0 * mean(&accs).unwrap_or(0.0),
                    tok: mean(&lens).unwrap_or(0.0),
                    completion_tok: mean(&comp),
                };
                (d, m)
            })
            .collect();
        Ok(RunMetrics {
            label: self.run_id.clone(),
            benchmarks,
        })
    }

    /// Efficiency of every correct, non-truncated segment.
    pub fn efficiency(&self, counter: &TokenCounter, verifier: &Verifier) -> Vec<EfficiencyStat> {
        let index = self.verdict_index();
        let mut out = Vec::new();
        for t in &self.traces {
            for s in t.segments.iter().filter(|s| measured(s) && !s.from_truncated) {
                if index.get(&(t.prompt_id.as_str(), t.sample_index, s.question_index)) != Some(&true) {
                    continue;
                }
                let Some(q) = self.corpus.get(&s.question_id) else { continue };
                out.push(efficiency_ratio(
                    &s.question_id,
                    &s.reasoning_text,
                    &q.gold_answer,
                    q.choices.as_deref(),
                    counter,
                    verifier,
                ));
            }
        }
        out
    }

    /// Pooled behavior profile per N.
    pub fn behavior(&self, matcher: &BehaviorMatcher) -> BTreeMap<usize, BehaviorProfile> {
        let mut per_n: BTreeMap<usize, Vec<BehaviorProfile>> = BTreeMap::new();
        for t in &self.traces {
            for s in t.segments.iter().filter(|s| measured(s)) {
                per_n.entry(t.n).or_default().push(matcher.profile(&s.reasoning_text));
            }
        }
        per_n.into_iter().map(|(n, ps)| (n, aggregate_profiles(&ps))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySummary {
    pub count: usize,
    pub mean_eta: Option<f64>,
    pub stats: Vec<EfficiencyStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub pass_at_1: AccuracyReport,
    pub avg_at_k: AccuracyReport,
}

#[derive(Debug, Clone, Serialize)]
struct ScalingCsvRow {
    n: usize,
    count: usize,
    mean: f64,
    median: f64,
    p10: f64,
    p90: f64,
    mean_rho: Option<f64>,
    rho_of_means: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct HistogramCsvRow {
    n: usize,
    edge: f64,
    count: usize,
}

pub fn write_scaling(dir: &Path, s: &ScalingSummary) -> Result<()> {
    write_json(&dir.join("scaling.json"), s)?;
    let rows: Vec<ScalingCsvRow> = s
        .rows
        .iter()
        .map(|r| ScalingCsvRow {
            n: r.n,
            count: r.count,
            mean: r.mean,
            median: r.median,
            p10: r.p10,
            p90: r.p90,
            mean_rho: r.mean_rho,
            rho_of_means: r.rho_of_means,
        })
        .collect();
    write_csv(&dir.join("scaling.csv"), &rows)?;
    let bins: Vec<HistogramCsvRow> = s
        .rows
        .iter()
        .flat_map(|r| {
            r.histogram.iter().map(|b| HistogramCsvRow {
                n: r.n,
                edge: b.edge,
                count: b.count,
            })
        })
        .collect();
    write_csv(&dir.join("scaling_histogram.csv"), &bins)
}

pub fn write_efficiency(dir: &Path, stats: Vec<EfficiencyStat>) -> Result<()> {
    let etas: Vec<f64> = stats.iter().map(|s| s.eta).collect();
    write_csv(&dir.join("efficiency.csv"), &stats)?;
    write_json(
        &dir.join("efficiency.json"),
        &EfficiencySummary {
            count: stats.len(),
            mean_eta: mean(&etas),
            stats,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
struct BehaviorCsvRow {
    n: usize,
    category: String,
    count: usize,
    density: f64,
    word_total: usize,
}

pub fn write_behavior(dir: &Path, profiles: &BTreeMap<usize, BehaviorProfile>) -> Result<()> {
    write_json(&dir.join("behavior.json"), profiles)?;
    let rows: Vec<BehaviorCsvRow> = profiles
        .iter()
        .flat_map(|(&n, p)| {
            p.categories.iter().map(move |(c, x)| BehaviorCsvRow {
                n,
                category: format!("{c:?}").to_lowercase(),
                count: x.count,
                density: x.density,
                word_total: p.word_total,
            })
        })
        .collect();
    write_csv(&dir.join("behavior.csv"), &rows)
}

pub fn accuracy_summary(data: &RunData) -> Result<AccuracySummary> {
    Ok(AccuracySummary {
        pass_at_1: data.accuracy(AccuracyMode::PassAt1)?,
        avg_at_k: data.accuracy(AccuracyMode::AvgAtK(data.config.sample.samples as usize))?,
    })
}

/// The per-run report set written by the analyze stage.
pub fn write_run_reports(data: &RunData, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let cfg = &data.config;
    let scaling = scaling_summary(&data.segment_lengths(), &cfg.analyze.histogram_edges)?;
    write_scaling(dir, &scaling)?;
    write_json(&dir.join("accuracy.json"), &accuracy_summary(data)?)?;
    write_json(&dir.join("metrics.json"), &data.metrics()?)?;
    let counter = TokenCounter::from_spec(&cfg.parse.counter)?;
    let verifier = Verifier::new(crate::verifier::Tolerance::new(
        cfg.verify.relative_tolerance,
        cfg.verify.absolute_tolerance,
    ));
    write_efficiency(dir, data.efficiency(&counter, &verifier))?;
    let matcher = BehaviorMatcher::new(&cfg.analyze.lexicon)?;
    write_behavior(dir, &data.behavior(&matcher))?;
    Ok([
        "scaling.json",
        "scaling.csv",
        "scaling_histogram.csv",
        "accuracy.json",
        "metrics.json",
        "efficiency.json",
        "efficiency.csv",
        "behavior.json",
        "behavior.csv",
    ]
    .map(String::from)
    .to_vec())
}
