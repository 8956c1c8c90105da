//! Reasoning-span extraction and per-question segmentation of raw
//! generations.

mod answer;
mod segment;
mod think;
mod tokens;

use serde::{Deserialize, Serialize};

pub use answer::{answer_phrase, boxed_payloads, extract_predicted_answer, last_boxed, segment_response};
pub use segment::{anchor_index, segment, SegmentSpan};
pub use think::{extract_think, unterminated_think, ThinkError, ThinkSplit};
pub use tokens::{TokenCounter, Vocabulary};

use crate::packer::{Family, PromptSpec};
use crate::par;
use crate::sampler::{FinishReason, GenerationRecord};

pub fn token_count(text: &str, counter: &TokenCounter) -> usize {
    counter.count(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub question_index: usize,
    pub question_id: String,
    pub reasoning_text: String,
    pub response_text: String,
    pub predicted_answer: Option<String>,
    pub reasoning_tokens: usize,
    #[serde(default)]
    pub from_truncated: bool,
    #[serde(default)]
    pub tail_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTrace {
    pub prompt_id: String,
    pub sample_index: u32,
    pub family: Family,
    pub n: usize,
    pub parse_status: ParseStatus,
    /// Why parsing failed or fell short, e.g. `unterminated_think`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub finish_reason: FinishReason,
    pub completion_tokens: u64,
    pub segments: Vec<TraceSegment>,
}

impl ParsedTrace {
    pub fn key(&self) -> (String, u32) {
        (self.prompt_id.clone(), self.sample_index)
    }
}

/// Parses one generation against the prompt that produced it.
pub fn parse_generation(gen: &GenerationRecord, spec: &PromptSpec, counter: &TokenCounter) -> ParsedTrace {
    let n = spec.n();
    let family = spec.family;
    let truncated = gen.finish_reason == FinishReason::Length;
    let mut trace = ParsedTrace {
        prompt_id: gen.prompt_id.clone(),
        sample_index: gen.sample_index,
        family,
        n,
        parse_status: ParseStatus::Failed,
        failure: None,
        finish_reason: gen.finish_reason,
        completion_tokens: gen.usage.completion_tokens,
        segments: Vec::new(),
    };
    if gen.finish_reason == FinishReason::Error {
        trace.failure = Some(gen.error.clone().unwrap_or_else(|| "generation_error".into()));
        return trace;
    }
    let (think, post) = match extract_think(&gen.raw_text, family) {
        Ok(s) => (s.think, s.post),
        Err(ThinkError::Unterminated) if truncated => (unterminated_think(&gen.raw_text, family), ""),
        Err(ThinkError::Unterminated) => {
            trace.failure = Some("unterminated_think".into());
            return trace;
        }
    };
    let spans = segment(think, n, family);
    let regions = segment_response(post, n);
    let last_index = spans.iter().map(|s| s.question_index).max().unwrap_or(0);
    for s in &spans {
        let reasoning = &think[s.text.clone()];
        let response = regions
            .get(s.question_index - 1)
            .cloned()
            .flatten()
            .map_or("", |r| post[r].trim());
        trace.segments.push(TraceSegment {
            question_index: s.question_index,
            question_id: spec.question_ids[s.question_index - 1].clone(),
            reasoning_text: reasoning.to_string(),
            response_text: response.to_string(),
            predicted_answer: extract_predicted_answer(reasoning, response),
            reasoning_tokens: counter.count(reasoning),
            from_truncated: truncated,
            tail_truncated: truncated && s.question_index == last_index,
        });
    }
    let filled = trace
        .segments
        .iter()
        .filter(|s| !s.reasoning_text.is_empty())
        .count();
    trace.parse_status = if filled == n {
        ParseStatus::Complete
    } else if filled > 0 {
        trace.failure = Some(format!("found {filled} of {n} segments"));
        ParseStatus::Partial
    } else {
        trace.failure = Some("empty_reasoning".into());
        ParseStatus::Failed
    };
    trace
}

/// Parses a batch of generations; `lookup` maps a prompt id to its spec.
pub fn parse_all<'a, F>(gens: &[GenerationRecord], lookup: F, counter: &TokenCounter) -> Vec<ParsedTrace>
where
    F: Fn(&str) -> Option<&'a PromptSpec> + Sync + Send,
{
    par::map(gens, |g| match lookup(&g.prompt_id) {
        Some(spec) => parse_generation(g, spec, counter),
        None => ParsedTrace {
            prompt_id: g.prompt_id.clone(),
            sample_index: g.sample_index,
            family: Family::Qwen3,
            n: 0,
            parse_status: ParseStatus::Failed,
            failure: Some("unknown_prompt".into()),
            finish_reason: g.finish_reason,
            completion_tokens: g.usage.completion_tokens,
            segments: Vec::new(),
        },
    })
}
