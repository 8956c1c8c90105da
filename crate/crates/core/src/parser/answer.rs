use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

use super::segment::{segment_with, SegmentSpan};
use crate::packer::Family;

const BOX_COMMANDS: [&str; 2] = ["\\boxed", "\\fbox"];

/// Byte ranges of every balanced `\boxed{...}` payload, in order.
pub fn boxed_payloads(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut search = 0;
    while let Some((cmd_at, cmd)) = BOX_COMMANDS
        .iter()
        .filter_map(|c| text[search..].find(c).map(|i| (i + search, *c)))
        .min_by_key(|(i, _)| *i)
    {
        let mut i = cmd_at + cmd.len();
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        search = cmd_at + cmd.len();
        if bytes.get(i) != Some(&b'{') {
            continue;
        }
        let open = i;
        let mut depth = 0usize;
        let mut close = None;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => i += 1,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
            i += 1;
        }
        if let Some(c) = close {
            out.push(open + 1..c);
            search = c + 1;
        }
    }
    out
}

/// Payload of the last balanced `\boxed{...}` in `text`.
pub fn last_boxed(text: &str) -> Option<&str> {
    boxed_payloads(text).pop().map(|r| &text[r])
}

static ANSWER_PHRASE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?:\b(?i:final answer|answer|result)\s*(?:(?i:is)|=|:)|\b(?i:gives (?:me|us)|equals|is equal to))\s*(?:\$([^$\n]+)\$|(\\frac\{[^{}]*\}\{[^{}]*\}|[-+]?[0-9.][^\s]*|\(?[A-J]\)?(?:[\s.,;]|$)))",
    )
    .expect("answer regex")
});

/// Capture of the last "answer is X" style phrase. Only numbers, fractions,
/// `$...$` spans and option letters count, so prose like "gives a cleaner
/// form" yields nothing.
pub fn answer_phrase(text: &str) -> Option<String> {
    let caps = ANSWER_PHRASE.captures_iter(text).last()?;
    let raw = caps.get(1).or_else(|| caps.get(2))?.as_str();
    let cleaned = raw
        .trim()
        .trim_end_matches(['.', ',', ';', ':', '!', '?', ')'])
        .trim_start_matches('(')
        .trim();
    (!cleaned.is_empty()).then(|| cleaned.to_string())
}

/// Predicted answer for one question: the last box in its response span,
/// else in its reasoning span, else the trailing answer phrase.
pub fn extract_predicted_answer(reasoning: &str, response: &str) -> Option<String> {
    last_boxed(response)
        .or_else(|| last_boxed(reasoning))
        .map(|s| s.trim().to_string())
        .or_else(|| answer_phrase(response))
        .or_else(|| answer_phrase(reasoning))
}

/// Per-question regions of the post-reasoning text, indexed by
/// `question_index - 1`. Regions come from explicit question anchors; when
/// those are missing and the text holds exactly `n` boxes, each box closes
/// one region.
pub fn segment_response(post: &str, n: usize) -> Vec<Option<Range<usize>>> {
    let mut out = vec![None; n.max(1)];
    if n <= 1 {
        out[0] = Some(0..post.len());
        return out;
    }
    let spans: Vec<SegmentSpan> = segment_with(post, n, Family::Qwen3, false);
    if spans.len() == n {
        for s in spans {
            out[s.question_index - 1] = Some(s.span);
        }
        return out;
    }
    let boxes = boxed_payloads(post);
    if boxes.len() == n {
        let mut start = 0;
        for (i, b) in boxes.iter().enumerate() {
            let end = if i + 1 == n { post.len() } else { b.end + 1 };
            out[i] = Some(start..end);
            start = end;
        }
        return out;
    }
    if spans.len() > 1 {
        for s in spans {
            out[s.question_index - 1] = Some(s.span);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_phrases() {
        assert_eq!(answer_phrase("so the result is 2.").as_deref(), Some("2"));
        assert_eq!(answer_phrase("by itself also gives me 1.").as_deref(), Some("1"));
        assert_eq!(answer_phrase("The answer is $\\frac{1}{2}$").as_deref(), Some("\\frac{1}{2}"));
        assert_eq!(answer_phrase("Final answer: (B)").as_deref(), Some("B"));
        assert_eq!(answer_phrase("x equals -3, and y equals 4.").as_deref(), Some("4"));
        assert_eq!(answer_phrase("Multiplying gives a cleaner form."), None);
        assert_eq!(answer_phrase("I'm confident the answer is correct."), None);
    }

    #[test]
    fn boxed_extraction() {
        assert_eq!(last_boxed("The answer is \\boxed{9}."), Some("9"));
        assert_eq!(last_boxed("… \\boxed{\\frac{1}{2}} …"), Some("\\frac{1}{2}"));
        assert_eq!(last_boxed("\\boxed{1} then \\boxed{2}"), Some("2"));
        assert_eq!(last_boxed("\\boxed {x^{2}}"), Some("x^{2}"));
        assert_eq!(last_boxed("\\boxed{unclosed"), None);
        assert_eq!(last_boxed("\\fbox{7}"), Some("7"));
        assert_eq!(last_boxed("\\boxed{a\\}b}"), Some("a\\}b"));
        assert_eq!(last_boxed("nothing here"), None);
    }

    #[test]
    fn predicted_answer_priority() {
        assert_eq!(extract_predicted_answer("r \\boxed{1}", "o \\boxed{2}").as_deref(), Some("2"));
        assert_eq!(extract_predicted_answer("r \\boxed{1}", "o").as_deref(), Some("1"));
        assert_eq!(
            extract_predicted_answer("When I add 1 and 1 together, the result is 2.", "").as_deref(),
            Some("2")
        );
        assert_eq!(
            extract_predicted_answer("Multiplying 1 by itself also gives me 1.", "").as_deref(),
            Some("1")
        );
        assert_eq!(
            extract_predicted_answer("", "So the answer is $\\frac{3}{4}$.").as_deref(),
            Some("\\frac{3}{4}")
        );
        assert_eq!(extract_predicted_answer("no conclusion here", "nor here"), None);
    }

    #[test]
    fn response_regions() {
        let post = "\n**Question 1:** \\boxed{2}\n\n**Question 2:** \\boxed{1}\n";
        let r = segment_response(post, 2);
        assert_eq!(last_boxed(&post[r[0].clone().unwrap()]), Some("2"));
        assert_eq!(last_boxed(&post[r[1].clone().unwrap()]), Some("1"));

        let post = "1. \\boxed{5}\n2. \\boxed{6}\n3. \\boxed{7}";
        let r = segment_response(post, 3);
        let got: Vec<_> = r.iter().map(|x| last_boxed(&post[x.clone().unwrap()]).unwrap()).collect();
        assert_eq!(got, ["5", "6", "7"]);

        let r = segment_response("only \\boxed{5}", 3);
        assert!(r.iter().all(Option::is_none));

        assert_eq!(segment_response("", 1), vec![Some(0..0)]);
    }
}
