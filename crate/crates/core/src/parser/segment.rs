use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

use crate::packer::Family;

/// One per-question slice of a reasoning span. `span` ranges tile the input;
/// `text` is `span` minus surrounding whitespace and separator lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpan {
    pub question_index: usize,
    pub span: Range<usize>,
    pub text: Range<usize>,
}

static ANCHOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?ix)
        \b(?:question|problem)\s*\#?\s*(\d{1,2}|one|two|three|four|five|six|seven|eight|nine|ten)\b
        |
        \b(first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth|\d{1,2}(?:st|nd|rd|th))\s+(?:question|problem)\b",
    )
    .expect("anchor regex")
});

const MAX_LEAD: usize = 120;

fn word_index(w: &str) -> Option<usize> {
    let w = w.to_ascii_lowercase();
    let words = [
        ["one", "first"],
        ["two", "second"],
        ["three", "third"],
        ["four", "fourth"],
        ["five", "fifth"],
        ["six", "sixth"],
        ["seven", "seventh"],
        ["eight", "eighth"],
        ["nine", "ninth"],
        ["ten", "tenth"],
    ];
    if let Some(i) = words.iter().position(|p| p.contains(&w.as_str())) {
        return Some(i + 1);
    }
    let digits: String = w.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// The opening clause of a line: up to the first sentence terminator,
/// capped at [`MAX_LEAD`] bytes.
fn lead(line: &str) -> &str {
    let bytes = line.as_bytes();
    let mut end = line.len().min(MAX_LEAD);
    for (i, &b) in bytes.iter().enumerate().take(end) {
        if matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1).is_none_or(|c| c.is_ascii_whitespace()) {
            end = i;
            break;
        }
    }
    while !line.is_char_boundary(end) {
        end -= 1;
    }
    &line[..end]
}

/// Question index referenced at the start of a line, if any.
pub fn anchor_index(line: &str) -> Option<usize> {
    let caps = ANCHOR.captures(lead(line))?;
    let m = caps.get(1).or_else(|| caps.get(2))?;
    word_index(m.as_str()).filter(|&i| i >= 1)
}

fn is_separator(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 3
        && (t.bytes().all(|b| b == b'-') || t.bytes().all(|b| b == b'*') || t.bytes().all(|b| b == b'_'))
}

fn separators(family: Family) -> bool {
    family == Family::Qwen3
}

fn discourse_tokens(family: Family) -> &'static [&'static str] {
    match family {
        Family::R1Distill => &["Okay", "Hmm", "Alright"],
        _ => &[],
    }
}

fn starts_with_token(line: &str, tokens: &[&str]) -> bool {
    let t = line.trim_start();
    tokens.iter().any(|tok| {
        t.strip_prefix(tok)
            .is_some_and(|rest| rest.chars().next().is_none_or(|c| !c.is_alphanumeric()))
    })
}

#[derive(Debug, Default)]
struct LineScan {
    anchors: Vec<(usize, usize)>,
    separators: Vec<usize>,
    discourse: Vec<usize>,
}

fn scan(text: &str, n: usize, family: Family, aux: bool) -> LineScan {
    let mut out = LineScan::default();
    let tokens = discourse_tokens(family);
    let use_sep = aux && separators(family);
    let mut last = 0;
    let mut prev_blank = true;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        let blank = content.trim().is_empty();
        if !blank {
            if use_sep && is_separator(content) {
                out.separators.push(start);
            } else {
                if let Some(i) = anchor_index(content).filter(|&i| i > last && i <= n) {
                    out.anchors.push((start, i));
                    last = i;
                }
                if aux && prev_blank && start > 0 && starts_with_token(content, tokens) {
                    out.discourse.push(start);
                }
            }
        }
        prev_blank = blank;
    }
    out
}

fn has_content(s: &str) -> bool {
    s.lines().any(|l| !l.trim().is_empty() && !is_separator(l))
}

/// Splits `text` into at most `n` per-question spans.
///
/// Boundaries come from, in priority order: lines referencing "question i"
/// (or "the i-th question"), separator lines (`---`, qwen3), and discourse
/// openers at paragraph starts (r1-distill). Weaker cues only fill gaps the
/// stronger ones leave, and excess weaker cues are ignored.
pub fn segment(text: &str, n: usize, family: Family) -> Vec<SegmentSpan> {
    segment_with(text, n, family, true)
}

pub(crate) fn segment_with(text: &str, n: usize, family: Family, aux: bool) -> Vec<SegmentSpan> {
    if n <= 1 {
        return vec![make_span(text, 1, 0..text.len())];
    }
    let found = scan(text, n, family, aux);
    let floor = found.anchors.first().filter(|a| a.1 == 1).map_or(0, |a| a.0);
    let mut fixed: Vec<(usize, usize)> = vec![(floor, 1)];
    fixed.extend(found.anchors.iter().copied().filter(|a| a.1 >= 2));
    fixed.push((text.len(), n + 1));

    let mut boundaries: Vec<(usize, usize)> = Vec::new();
    for w in fixed.windows(2) {
        let ((lo, lo_idx), (hi, hi_idx)) = (w[0], w[1]);
        let mut need = hi_idx - lo_idx - 1;
        let mut chosen: Vec<usize> = Vec::new();
        for pool in [&found.separators, &found.discourse] {
            if need == 0 {
                break;
            }
            for &c in pool.iter().filter(|&&c| c > lo && c < hi) {
                if need == 0 {
                    break;
                }
                if chosen.contains(&c) {
                    continue;
                }
                let prev = chosen.iter().copied().filter(|&p| p < c).max().unwrap_or(lo);
                let next = chosen.iter().copied().filter(|&p| p > c).min().unwrap_or(hi);
                if has_content(&text[prev..c]) && has_content(&text[c..next]) {
                    chosen.push(c);
                    need -= 1;
                }
            }
        }
        chosen.sort_unstable();
        boundaries.extend(chosen.into_iter().zip(lo_idx + 1..));
        if hi_idx <= n {
            boundaries.push((hi, hi_idx));
        }
    }

    let mut spans = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0;
    let mut idx = 1;
    for (b, b_idx) in boundaries {
        spans.push(make_span(text, idx, start..b));
        start = b;
        idx = b_idx;
    }
    spans.push(make_span(text, idx, start..text.len()));
    spans
}

fn make_span(text: &str, question_index: usize, span: Range<usize>) -> SegmentSpan {
    let trimmed = trim_range(text, span.clone());
    SegmentSpan {
        question_index,
        span,
        text: trimmed,
    }
}

/// Shrinks a range past whitespace and separator lines at either end.
fn trim_range(text: &str, mut r: Range<usize>) -> Range<usize> {
    loop {
        let s = &text[r.clone()];
        let lead_ws = s.len() - s.trim_start().len();
        let trail_ws = s.len() - s.trim_end().len();
        if lead_ws + trail_ws >= s.len() {
            return r.start..r.start;
        }
        r = r.start + lead_ws..r.end - trail_ws;
        let s = &text[r.clone()];
        let first_line = s.split('\n').next().unwrap_or("");
        if is_separator(first_line) {
            r.start += first_line.len();
            continue;
        }
        let last_line = s.rsplit('\n').next().unwrap_or("");
        if is_separator(last_line) {
            r.end -= last_line.len();
            continue;
        }
        return r;
    }
}
