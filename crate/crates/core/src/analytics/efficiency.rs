use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ingest::ChoiceOption;
use crate::parser::{boxed_payloads, TokenCounter};
use crate::verifier::Verifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyStat {
    pub question_id: String,
    pub pre_tokens: usize,
    pub total_tokens: usize,
    pub eta: f64,
}

static LITERAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"-?\\d?frac\s*\{[^{}]*\}\s*\{[^{}]*\}|-?\d+(?:,\d{3})*(?:\.\d+)?(?:\s*/\s*\d+)?%?|-?\.\d+",
    )
    .expect("literal regex")
});

/// Byte ranges of answer-like substrings (boxed payloads, fractions and
/// numeric literals), ordered by where they end.
pub fn answer_candidates(text: &str) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = boxed_payloads(text);
    out.extend(LITERAL.find_iter(text).map(|m| m.range()));
    out.sort_by_key(|r| (r.end, r.start));
    out
}

/// Share of the reasoning spent before the first candidate equal to `gold`.
/// When no candidate matches, the whole reasoning counts (eta = 1).
pub fn efficiency_ratio(
    question_id: &str,
    reasoning: &str,
    gold: &str,
    choices: Option<&[ChoiceOption]>,
    counter: &TokenCounter,
    verifier: &Verifier,
) -> EfficiencyStat {
    let total_tokens = counter.count(reasoning);
    let hit = answer_candidates(reasoning)
        .into_iter()
        .find(|r| verifier.verify(Some(&reasoning[r.clone()]), gold, choices).correct);
    let pre_tokens = match hit {
        Some(r) => counter.count(&reasoning[..r.end]).min(total_tokens),
        None => total_tokens,
    };
    let eta = if total_tokens == 0 {
        1.0
    } else {
        pre_tokens as f64 / total_tokens as f64
    };
    EfficiencyStat {
        question_id: question_id.to_string(),
        pre_tokens,
        total_tokens,
        eta,
    }
}
