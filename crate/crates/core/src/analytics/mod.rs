//! Length, compression, accuracy, efficiency and behavior statistics over
//! parsed traces and verdicts.

mod behavior;
mod efficiency;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use behavior::{aggregate_profiles, behavior_profile, BehaviorMatcher, BehaviorProfile, Category, CategoryCount, Lexicon};
pub use efficiency::{answer_candidates, efficiency_ratio, EfficiencyStat};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Lower edge; the bin runs up to the next edge, the last one is open.
    pub edge: f64,
    pub count: usize,
}

/// Counts values per bin. Values below the first edge land in the first bin.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = edges.iter().map(|&edge| HistogramBin { edge, count: 0 }).collect();
    if bins.is_empty() {
        return bins;
    }
    for &v in values {
        let i = edges.partition_point(|&e| e <= v).saturating_sub(1);
        bins[i].count += 1;
    }
    bins
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Linear-interpolation percentile, `p` in [0, 1].
pub fn percentile(xs: &[f64], p: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(s[lo] + (s[hi] - s[lo]) * (pos - lo as f64))
}

pub fn median(xs: &[f64]) -> Option<f64> {
    percentile(xs, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionStat {
    pub question_id: String,
    pub baseline_len: f64,
    pub multi_len: f64,
    pub n: usize,
    pub rho: f64,
    pub delta: f64,
}

/// `(rho, delta)` with rho = 1 − multi/baseline and delta = multi − baseline.
pub fn compression_rate(baseline_len: f64, multi_len: f64) -> Result<(f64, f64)> {
    if baseline_len <= 0.0 {
        return Err(Error::UndefinedRho);
    }
    Ok((1.0 - multi_len / baseline_len, multi_len - baseline_len))
}

pub fn compression_stat(question_id: &str, n: usize, baseline_len: f64, multi_len: f64) -> Result<CompressionStat> {
    let (rho, delta) = compression_rate(baseline_len, multi_len)?;
    Ok(CompressionStat {
        question_id: question_id.to_string(),
        baseline_len,
        multi_len,
        n,
        rho,
        delta,
    })
}

/// One reasoning length for one question under some N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthObs {
    pub question_id: String,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    /// Mean of per-item rates against each question's mean single-question
    /// length; absent without an N=1 group.
    pub mean_rho: Option<f64>,
    pub rho_of_means: Option<f64>,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub rows: Vec<ScalingRow>,
    pub stats: Vec<CompressionStat>,
}

pub fn scaling_summary(groups: &BTreeMap<usize, Vec<LengthObs>>, edges: &[f64]) -> Result<ScalingSummary> {
    if let Some((n, _)) = groups.iter().find(|(_, g)| g.is_empty()) {
        return Err(Error::EmptyGroup(format!("N={n}")));
    }
    let baseline: Option<HashMap<&str, f64>> = groups.get(&1).map(|g| {
        let mut per_q: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for o in g {
            per_q.entry(&o.question_id).or_default().push(o.length);
        }
        per_q.into_iter().map(|(q, xs)| (q, mean(&xs).unwrap_or(0.0))).collect()
    });
    let base_mean = groups.get(&1).and_then(|g| mean(&lengths(g)));

    let mut rows = Vec::new();
    let mut stats = Vec::new();
    for (&n, group) in groups {
        let xs = lengths(group);
        let mut rhos = Vec::new();
        if let Some(base) = &baseline {
            for o in group {
                if let Some(&b) = base.get(o.question_id.as_str()).filter(|&&b| b > 0.0) {
                    let s = compression_stat(&o.question_id, n, b, o.length)?;
                    rhos.push(s.rho);
                    stats.push(s);
                }
            }
        }
        let m = mean(&xs).expect("non-empty group");
        rows.push(ScalingRow {
            n,
            count: xs.len(),
            mean: m,
            median: median(&xs).expect("non-empty group"),
            p10: percentile(&xs, 0.1).expect("non-empty group"),
            p90: percentile(&xs, 0.9).expect("non-empty group"),
            mean_rho: mean(&rhos),
            rho_of_means: base_mean.and_then(|b| compression_rate(b, m).ok().map(|r| r.0)),
            histogram: histogram(&xs, edges),
        });
    }
    Ok(ScalingSummary { rows, stats })
}

fn lengths(group: &[LengthObs]) -> Vec<f64> {
    group.iter().map(|o| o.length).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "k")]
pub enum AccuracyMode {
    PassAt1,
    AvgAtK(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub mode: AccuracyMode,
    pub per_question: BTreeMap<String, f64>,
    pub aggregate: f64,
}

/// `verdicts[q][i]` is the correctness of sample `i` for question `q`.
pub fn accuracy(verdicts: &BTreeMap<String, Vec<bool>>, mode: AccuracyMode) -> Result<AccuracyReport> {
    let mut per_question = BTreeMap::new();
    for (q, v) in verdicts {
        let score = match mode {
            AccuracyMode::PassAt1 => match v.first() {
                Some(&c) => f64::from(u8::from(c)),
                None => {
                    return Err(Error::SampleCountMismatch {
                        question: q.clone(),
                        have: 0,
                        expected: 1,
                    })
                }
            },
            AccuracyMode::AvgAtK(k) => {
                if v.len() != k || k == 0 {
                    return Err(Error::SampleCountMismatch {
                        question: q.clone(),
                        have: v.len(),
                        expected: k,
                    });
                }
                v.iter().filter(|&&c| c).count() as f64 / k as f64
            }
        };
        per_question.insert(q.clone(), score);
    }
    let scores: Vec<f64> = per_question.values().copied().collect();
    Ok(AccuracyReport {
        mode,
        aggregate: mean(&scores).unwrap_or(0.0),
        per_question,
    })
}

/// acc_N / acc_1 for every N.
pub fn relative_accuracy(per_n: &BTreeMap<usize, f64>) -> Result<BTreeMap<usize, f64>> {
    let base = per_n.get(&1).copied().filter(|&a| a > 0.0).ok_or(Error::MissingBaseline)?;
    Ok(per_n.iter().map(|(&n, &a)| (n, a / base)).collect())
}

/// Per-question aggregate for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionStat {
    pub question_id: String,
    pub length: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAggregate {
    pub count: usize,
    pub mean_length: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub level: u8,
    pub before: Option<LevelAggregate>,
    pub after: Option<LevelAggregate>,
    pub delta_tokens_pct: Option<f64>,
}

pub const LEVELS: std::ops::RangeInclusive<u8> = 1..=5;

/// Levels 1 through 5 for two runs; a level without data gets empty
/// aggregates.
pub fn difficulty_breakdown(
    before: &[QuestionStat],
    after: &[QuestionStat],
    levels: &HashMap<String, u8>,
) -> Result<Vec<DifficultyRow>> {
    let bucket = |stats: &[QuestionStat]| -> Result<BTreeMap<u8, LevelAggregate>> {
        let mut by_level: BTreeMap<u8, Vec<&QuestionStat>> = BTreeMap::new();
        for s in stats {
            let level = levels
                .get(&s.question_id)
                .ok_or_else(|| Error::UnknownQuestion(s.question_id.clone()))?;
            by_level.entry(*level).or_default().push(s);
        }
        Ok(by_level
            .into_iter()
            .map(|(l, ss)| {
                let lens: Vec<f64> = ss.iter().map(|s| s.length).collect();
                let accs: Vec<f64> = ss.iter().filter_map(|s| s.accuracy).collect();
                let agg = LevelAggregate {
                    count: ss.len(),
                    mean_length: mean(&lens).unwrap_or(0.0),
                    accuracy: mean(&accs),
                };
                (l, agg)
            })
            .collect())
    };
    let (b, a) = (bucket(before)?, bucket(after)?);
    Ok(LEVELS
        .map(|level| {
            let before = b.get(&level).cloned();
            let after = a.get(&level).cloned();
            let delta_tokens_pct = match (&before, &after) {
                (Some(x), Some(y)) if x.mean_length > 0.0 => {
                    Some(100.0 * (y.mean_length - x.mean_length) / x.mean_length)
                }
                _ => None,
            };
            DifficultyRow {
                level,
                before,
                after,
                delta_tokens_pct,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkMetrics {
    /// Accuracy in percent.
    pub acc: f64,
    /// Mean reasoning tokens per question.
    pub tok: f64,
    /// Mean completion tokens per question, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tok: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub benchmarks: BTreeMap<String, BenchmarkMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub benchmark: String,
    pub base_acc: f64,
    pub base_tok: f64,
    pub acc: f64,
    pub tok: f64,
    pub delta_acc: f64,
    pub delta_tok_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub base_label: String,
    pub label: String,
    pub rows: Vec<DeltaRow>,
    /// Mean accuracy change in points.
    pub delta_acc: f64,
    /// Mean of per-benchmark relative token changes, in percent.
    pub delta_tok_pct: f64,
}

/// Rounds away binary noise from differences of decimal inputs.
fn tidy(x: f64) -> f64 {
    (x * 1e10).round() / 1e10
}

pub fn delta_table(base: &RunMetrics, run: &RunMetrics) -> Result<DeltaTable> {
    let a: BTreeSet<&String> = base.benchmarks.keys().collect();
    let b: BTreeSet<&String> = run.benchmarks.keys().collect();
    if a != b || a.is_empty() {
        let diff: Vec<&str> = a.symmetric_difference(&b).map(|s| s.as_str()).collect();
        return Err(Error::BenchmarkMismatch(if diff.is_empty() {
            "no benchmarks".into()
        } else {
            diff.join(", ")
        }));
    }
    let mut rows = Vec::new();
    for (name, x) in &base.benchmarks {
        let y = run.benchmarks[name];
        if x.tok <= 0.0 {
            return Err(Error::UndefinedRho);
        }
        rows.push(DeltaRow {
            benchmark: name.clone(),
            base_acc: x.acc,
            base_tok: x.tok,
            acc: y.acc,
            tok: y.tok,
            delta_acc: tidy(y.acc - x.acc),
            delta_tok_pct: tidy(100.0 * (y.tok - x.tok) / x.tok),
        });
    }
    let dacc: Vec<f64> = rows.iter().map(|r| r.delta_acc).collect();
    let dtok: Vec<f64> = rows.iter().map(|r| r.delta_tok_pct).collect();
    Ok(DeltaTable {
        base_label: base.label.clone(),
        label: run.label.clone(),
        delta_acc: tidy(mean(&dacc).expect("non-empty")),
        delta_tok_pct: tidy(mean(&dtok).expect("non-empty")),
        rows,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes flat rows as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Manifest(format!("csv: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    for r in rows {
        w.serialize(r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
