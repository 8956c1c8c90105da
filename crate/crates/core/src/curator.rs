//! Rejection filtering of parsed segments and emission of single-question
//! fine-tuning files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analytics::{histogram, HistogramBin};
use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::packer::{Family, TemplateSet, REASONING_INSTRUCTION, TOY_QUESTION_ID};
use crate::parser::ParsedTrace;
use crate::verifier::SegmentVerdict;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuratedExample {
    pub question_id: String,
    pub question_text: String,
    pub reasoning_text: String,
    pub gold_answer: String,
    pub n_questions: usize,
    pub position: usize,
    pub sample_index: u32,
    pub reasoning_tokens: usize,
    pub prompt_id: String,
    pub family: Family,
}

impl CuratedExample {
    fn dedup_key(&self) -> (&str, usize, usize, u32, &str) {
        (
            &self.question_id,
            self.n_questions,
            self.position,
            self.sample_index,
            &self.prompt_id,
        )
    }
}

/// A parsed segment paired with its verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredSegment {
    pub example: CuratedExample,
    pub correct: bool,
    pub truncated: bool,
    pub tail_truncated: bool,
}

/// Joins segments with their verdicts. Segments with empty reasoning and
/// the synthetic toy question are dropped; any other segment without a
/// verdict is an error.
pub fn score_segments(traces: &[ParsedTrace], verdicts: &[SegmentVerdict], corpus: &Corpus) -> Result<Vec<ScoredSegment>> {
    let by_key: HashMap<(&str, u32, usize), &SegmentVerdict> = verdicts.iter().map(|v| (v.key(), v)).collect();
    let mut out = Vec::new();
    for t in traces {
        for s in &t.segments {
            if s.reasoning_text.trim().is_empty() || s.question_id == TOY_QUESTION_ID {
                continue;
            }
            let name = || format!("{}#{}/q{}", t.prompt_id, t.sample_index, s.question_index);
            let v = by_key
                .get(&(t.prompt_id.as_str(), t.sample_index, s.question_index))
                .ok_or_else(|| Error::MissingVerdict(name()))?;
            let q = corpus
                .get(&s.question_id)
                .ok_or_else(|| Error::UnknownQuestion(s.question_id.clone()))?;
            out.push(ScoredSegment {
                example: CuratedExample {
                    question_id: s.question_id.clone(),
                    question_text: q.text.clone(),
                    reasoning_text: s.reasoning_text.clone(),
                    gold_answer: q.gold_answer.clone(),
                    n_questions: t.n,
                    position: s.question_index,
                    sample_index: t.sample_index,
                    reasoning_tokens: s.reasoning_tokens,
                    prompt_id: t.prompt_id.clone(),
                    family: t.family,
                },
                correct: v.verdict.correct,
                truncated: s.from_truncated,
                tail_truncated: s.tail_truncated,
            });
        }
    }
    Ok(out)
}

/// Which truncated segments survive filtering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationPolicy {
    /// Drop every segment of a length-limited generation.
    #[default]
    DropSample,
    /// Keep the finished segments before the cut-off one.
    DropTail,
}

/// Correct segments, in input order.
pub fn filter_correct(
    traces: &[ParsedTrace],
    verdicts: &[SegmentVerdict],
    corpus: &Corpus,
    policy: TruncationPolicy,
) -> Result<Vec<CuratedExample>> {
    Ok(score_segments(traces, verdicts, corpus)?
        .into_iter()
        .filter(|s| s.correct)
        .filter(|s| match policy {
            TruncationPolicy::DropSample => !s.truncated,
            TruncationPolicy::DropTail => !s.tail_truncated,
        })
        .map(|s| s.example)
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SftFormat {
    #[default]
    Conversational,
    Plain,
}

impl FromStr for SftFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conversational" => Ok(Self::Conversational),
            "plain" => Ok(Self::Plain),
            _ => Err(Error::InvalidConfig(vec![format!("unknown format {s:?}")])),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    ThinkOnly,
    #[default]
    ThinkPlusAnswer,
}

impl FromStr for TargetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "think-only" => Ok(Self::ThinkOnly),
            "think-plus-answer" => Ok(Self::ThinkPlusAnswer),
            _ => Err(Error::InvalidConfig(vec![format!("unknown target kind {s:?}")])),
        }
    }
}

pub const DEFAULT_TOKEN_EDGES: [f64; 9] = [0.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0, 8192.0, 16384.0, 32768.0];

#[derive(Debug, Clone)]
pub struct EmitOptions {
    pub format: SftFormat,
    pub targets: TargetKind,
    pub max_per_question: Option<usize>,
    pub templates: TemplateSet,
    pub histogram_edges: Vec<f64>,
}

impl Default for EmitOptions {
    fn default() -> Self {
        Self {
            format: SftFormat::default(),
            targets: TargetKind::default(),
            max_per_question: None,
            templates: TemplateSet::default(),
            histogram_edges: DEFAULT_TOKEN_EDGES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionReport {
    pub path: PathBuf,
    pub format: SftFormat,
    pub targets: TargetKind,
    pub examples: usize,
    pub duplicates_removed: usize,
    pub capped: usize,
    pub questions: usize,
    pub per_position: BTreeMap<usize, usize>,
    pub per_n: BTreeMap<usize, usize>,
    pub token_histogram: Vec<HistogramBin>,
    pub sha256: String,
}

/// Assistant turn: the reasoning inside the family's think tags, then the
/// boxed gold answer unless only the reasoning is targeted.
pub fn assistant_content(ex: &CuratedExample, targets: TargetKind) -> String {
    let (open, close) = ex.family.think_tags();
    let think = format!("{open}\n{}\n{close}", ex.reasoning_text);
    match targets {
        TargetKind::ThinkOnly => think,
        TargetKind::ThinkPlusAnswer => format!("{think}\n\n\\boxed{{{}}}", ex.gold_answer),
    }
}

fn example_line(ex: &CuratedExample, opts: &EmitOptions) -> Result<String> {
    let content = assistant_content(ex, opts.targets);
    let meta = json!({
        "question_id": ex.question_id,
        "n_questions": ex.n_questions,
        "position": ex.position,
        "sample_index": ex.sample_index,
        "prompt_id": ex.prompt_id,
        "reasoning_tokens": ex.reasoning_tokens,
    });
    let value = match opts.format {
        SftFormat::Conversational => json!({
            "messages": [
                {"role": "system", "content": REASONING_INSTRUCTION},
                {"role": "user", "content": ex.question_text},
                {"role": "assistant", "content": content},
            ],
            "metadata": meta,
        }),
        SftFormat::Plain => json!({
            "prompt": opts.templates.render(ex.family, &ex.question_text)?,
            "completion": content,
            "metadata": meta,
        }),
    };
    Ok(serde_json::to_string(&value)?)
}

/// Sorts, deduplicates and caps examples exactly as `emit_sft` writes them.
/// Returns the kept examples with the number of duplicates and capped ones.
pub fn prepare(examples: &[CuratedExample], max_per_question: Option<usize>) -> (Vec<CuratedExample>, usize, usize) {
    let mut sorted: Vec<&CuratedExample> = examples.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.question_id, a.position, a.sample_index, a.n_questions, &a.prompt_id).cmp(&(
            &b.question_id,
            b.position,
            b.sample_index,
            b.n_questions,
            &b.prompt_id,
        ))
    });
    let mut seen = BTreeSet::new();
    let mut per_question: HashMap<&str, usize> = HashMap::new();
    let (mut dups, mut capped) = (0, 0);
    let mut kept = Vec::new();
    for ex in sorted {
        if !seen.insert(ex.dedup_key()) {
            dups += 1;
            continue;
        }
        let count = per_question.entry(&ex.question_id).or_default();
        if max_per_question.is_some_and(|m| *count >= m) {
            capped += 1;
            continue;
        }
        *count += 1;
        kept.push(ex.clone());
    }
    (kept, dups, capped)
}

/// Writes one JSON line per example, sorted by question id, position and
/// sample index.
pub fn emit_sft(examples: &[CuratedExample], opts: &EmitOptions, path: &Path) -> Result<EmissionReport> {
    if examples.is_empty() {
        return Err(Error::NothingToEmit);
    }
    let (kept, duplicates_removed, capped) = prepare(examples, opts.max_per_question);
    let mut body = String::new();
    for ex in &kept {
        body.push_str(&example_line(ex, opts)?);
        body.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;

    let mut per_position = BTreeMap::new();
    let mut per_n = BTreeMap::new();
    for ex in &kept {
        *per_position.entry(ex.position).or_default() += 1;
        *per_n.entry(ex.n_questions).or_default() += 1;
    }
    let lengths: Vec<f64> = kept.iter().map(|e| e.reasoning_tokens as f64).collect();
    Ok(EmissionReport {
        path: path.to_path_buf(),
        format: opts.format,
        targets: opts.targets,
        examples: kept.len(),
        duplicates_removed,
        capped,
        questions: kept.iter().map(|e| &e.question_id).collect::<BTreeSet<_>>().len(),
        per_position,
        per_n,
        token_histogram: histogram(&lengths, &opts.histogram_edges),
        sha256: hex::encode(Sha256::digest(body.as_bytes())),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortestSelection {
    pub examples: Vec<CuratedExample>,
    /// Questions without any correct sample.
    pub omitted: Vec<String>,
}

/// One correct example per question: fewest reasoning tokens, then lowest
/// sample index.
pub fn select_shortest_correct(samples: &[ScoredSegment]) -> ShortestSelection {
    let mut best: BTreeMap<&str, Option<&CuratedExample>> = BTreeMap::new();
    for s in samples {
        let slot = best.entry(&s.example.question_id).or_default();
        if !s.correct || s.truncated {
            continue;
        }
        let better = slot.is_none_or(|b| {
            (s.example.reasoning_tokens, s.example.sample_index) < (b.reasoning_tokens, b.sample_index)
        });
        if better {
            *slot = Some(&s.example);
        }
    }
    let mut out = ShortestSelection {
        examples: Vec::new(),
        omitted: Vec::new(),
    };
    for (q, ex) in best {
        match ex {
            Some(e) => out.examples.push(e.clone()),
            None => out.omitted.push(q.to_string()),
        }
    }
    out
}
