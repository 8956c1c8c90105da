//! Answer normalization and equivalence checking.
//!
//! Answers are normalized into one of a few forms (exact rational, decimal,
//! integer set, multiple-choice letter, canonical symbol sequence, plain
//! text) and compared form-by-form. Numeric comparisons between rationals
//! and decimals use a relative tolerance evaluated in exact arithmetic.

use std::fmt;
use std::sync::LazyLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ChoiceOption, Corpus};
use crate::packer::{TOY_ANSWER, TOY_QUESTION_ID};
use crate::par;
use crate::parser::ParsedTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerKind {
    Rational,
    Decimal,
    IntegerSet,
    Choice,
    Symbolic,
    Text,
}

/// Value of `mantissa × 10^exponent`; the mantissa carries no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecimalValue {
    pub mantissa: BigInt,
    pub exponent: i32,
}

impl DecimalValue {
    pub fn new(mantissa: BigInt, exponent: i32) -> Self {
        let ten = BigInt::from(10);
        let (mut m, mut e) = (mantissa, exponent);
        if m.is_zero() {
            return Self {
                mantissa: m,
                exponent: 0,
            };
        }
        while (&m % &ten).is_zero() {
            m /= &ten;
            e += 1;
        }
        Self {
            mantissa: m,
            exponent: e,
        }
    }

    pub fn to_rational(&self) -> BigRational {
        let scale = BigInt::from(10).pow(self.exponent.unsigned_abs());
        if self.exponent >= 0 {
            BigRational::from_integer(&self.mantissa * scale)
        } else {
            BigRational::new(self.mantissa.clone(), scale)
        }
    }

    fn render(&self) -> String {
        let neg = self.mantissa.is_negative();
        let digits = self.mantissa.abs().to_string();
        let body = if self.exponent >= 0 {
            format!("{digits}{}.0", "0".repeat(self.exponent as usize))
        } else {
            let frac = self.exponent.unsigned_abs() as usize;
            if digits.len() > frac {
                let (int, dec) = digits.split_at(digits.len() - frac);
                format!("{int}.{dec}")
            } else {
                format!("0.{}{digits}", "0".repeat(frac - digits.len()))
            }
        };
        if neg {
            format!("-{body}")
        } else {
            body
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerValue {
    /// Lowest terms, positive denominator.
    Rational(BigRational),
    Decimal(DecimalValue),
    /// Sorted and deduplicated.
    IntegerSet(Vec<BigInt>),
    Choice(String),
    Symbolic(Vec<String>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerForm {
    pub value: AnswerValue,
    pub source: String,
}

impl AnswerForm {
    pub fn kind(&self) -> AnswerKind {
        match self.value {
            AnswerValue::Rational(_) => AnswerKind::Rational,
            AnswerValue::Decimal(_) => AnswerKind::Decimal,
            AnswerValue::IntegerSet(_) => AnswerKind::IntegerSet,
            AnswerValue::Choice(_) => AnswerKind::Choice,
            AnswerValue::Symbolic(_) => AnswerKind::Symbolic,
            AnswerValue::Text(_) => AnswerKind::Text,
        }
    }

    /// Canonical string; normalizing it yields the same value.
    pub fn render(&self) -> String {
        match &self.value {
            AnswerValue::Rational(r) => {
                if r.denom().is_one() {
                    r.numer().to_string()
                } else {
                    format!("{}/{}", r.numer(), r.denom())
                }
            }
            AnswerValue::Decimal(d) => d.render(),
            AnswerValue::IntegerSet(xs) => {
                let items: Vec<String> = xs.iter().map(BigInt::to_string).collect();
                format!("\\{{{}\\}}", items.join(", "))
            }
            AnswerValue::Choice(c) => c.clone(),
            AnswerValue::Symbolic(toks) => toks.join(" "),
            AnswerValue::Text(t) => t.clone(),
        }
    }

    fn numeric(&self) -> Option<BigRational> {
        match &self.value {
            AnswerValue::Rational(r) => Some(r.clone()),
            AnswerValue::Decimal(d) => Some(d.to_rational()),
            _ => None,
        }
    }
}

impl fmt::Display for AnswerForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RationalExact,
    DecimalTolerance,
    Choice,
    SymbolicCanonical,
    TextExact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub method: Method,
    pub detail: String,
}

/// Numeric agreement band: `|a−b| ≤ relative·max(|a|,|b|)` or `|a−b| ≤ absolute`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerance {
    relative: BigRational,
    absolute: BigRational,
}

impl Tolerance {
    pub fn new(relative: f64, absolute: f64) -> Self {
        // Through the shortest decimal rendering, so 1e-6 is exactly 1/10^6.
        let conv = |x: f64| {
            let s = format!("{:e}", x.abs());
            let Some((mant, exp)) = s.split_once('e') else {
                return BigRational::zero();
            };
            let frac = mant.split_once('.').map_or(0, |(_, f)| f.len()) as i32;
            let digits: BigInt = mant.replace('.', "").parse().unwrap_or_default();
            let exp = exp.parse::<i32>().unwrap_or(0) - frac;
            let ten = BigInt::from(10);
            if exp >= 0 {
                BigRational::from_integer(digits * num_traits::pow(ten, exp as usize))
            } else {
                BigRational::new(digits, num_traits::pow(ten, exp.unsigned_abs() as usize))
            }
        };
        Self {
            relative: conv(relative),
            absolute: conv(absolute),
        }
    }

    pub fn within(&self, a: &BigRational, b: &BigRational) -> bool {
        let diff = (a - b).abs();
        if diff <= self.absolute {
            return true;
        }
        let scale = std::cmp::max(a.abs(), b.abs());
        diff <= &self.relative * scale
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            relative: BigRational::new(BigInt::one(), BigInt::from(1_000_000)),
            absolute: BigRational::new(BigInt::one(), BigInt::from(1_000_000_000)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Verifier {
    pub tolerance: Tolerance,
}

static WRAPPED_TEXT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\\(?:text|textbf|textit|mathrm|mathbf|mbox|operatorname)\s*\{([^{}]*)\}").expect("regex")
});
static ASSIGNMENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z](?:_\{?\w+\}?)?\s*=\s*(.+)$").expect("regex"));
static THOUSANDS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$").expect("regex"));
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?\d+$").expect("regex"));
static DECIMAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-]?)(\d*)\.(\d*)$").expect("regex"));
static PERCENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-]?(?:\d+\.?\d*|\.\d+))\s*(?:\\%|%)$").expect("regex"));
static SLASH_FRACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-]?\d+)\s*/\s*([+-]?\d+)$").expect("regex"));
static LATEX_FRACTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([+-]?)\s*\\frac\s*(?:\{\s*([+-]?\d+)\s*\}|(\d))\s*(?:\{\s*([+-]?\d+)\s*\}|(\d))$")
        .expect("regex")
});
static CONTROL_SEQ: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\\(?:[A-Za-z]+|.)").expect("regex"));
static CHOICE_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(?([A-Za-z])\)?$").expect("regex"));

/// Strips wrappers and presentation-only markup.
fn clean(raw: &str) -> String {
    let mut s = raw.trim().to_string();
    if let Some(inner) = crate::parser::last_boxed(&s).filter(|_| s.starts_with("\\boxed") && s.ends_with('}')) {
        s = inner.to_string();
    }
    loop {
        let before = s.clone();
        s = s.trim().to_string();
        for (open, close) in [("$$", "$$"), ("$", "$"), ("\\(", "\\)"), ("\\[", "\\]")] {
            if s.len() >= open.len() + close.len() && s.starts_with(open) && s.ends_with(close) {
                s = s[open.len()..s.len() - close.len()].to_string();
                break;
            }
        }
        s = WRAPPED_TEXT.replace_all(&s, "$1").into_owned();
        s = s.trim_end_matches(['.', '。']).trim().to_string();
        if s == before {
            break;
        }
    }
    for (from, to) in [("^{\\circ}", ""), ("^\\circ", ""), ("°", ""), ("{,}", ",")] {
        s = s.replace(from, to);
    }
    // Whole control sequences only: `\\ ` is a line break then a space, and
    // `\leftarrow` is not `\left`.
    let s = CONTROL_SEQ.replace_all(&s, |c: &regex::Captures| {
        match &c[0] {
            "\\left" | "\\right" | "\\displaystyle" | "\\$" | "\\!" | "\\," | "\\;" => "",
            "\\ " => " ",
            "\\dfrac" | "\\tfrac" => "\\frac",
            other => other,
        }
        .to_string()
    });
    let s = s.trim().to_string();
    match ASSIGNMENT.captures(&s) {
        Some(c) if !c[1].contains('=') => c[1].trim().to_string(),
        _ => s,
    }
}

fn parse_int(s: &str) -> Option<BigInt> {
    s.trim_start_matches('+').parse().ok()
}

fn rational(num: &str, den: &str, neg: bool) -> Option<BigRational> {
    let (n, d) = (parse_int(num)?, parse_int(den)?);
    if d.is_zero() {
        return None;
    }
    let r = BigRational::new(n, d);
    Some(if neg { -r } else { r })
}

fn decimal(s: &str) -> Option<DecimalValue> {
    let c = DECIMAL.captures(s)?;
    let (int, frac) = (&c[2], &c[3]);
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let digits = format!("{int}{frac}");
    let mut m: BigInt = digits.parse().ok()?;
    if &c[1] == "-" {
        m = -m;
    }
    Some(DecimalValue::new(m, -(frac.len() as i32)))
}

/// Splits at commas outside any bracket pair.
fn top_level_commas(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn looks_like_text(s: &str) -> bool {
    if s.chars().any(|c| c.is_ascii_digit() || "+-*/^=_{}\\()[]<>|".contains(c)) {
        return false;
    }
    let mut run = 0;
    for c in s.chars() {
        if c.is_alphabetic() {
            run += 1;
            if run >= 2 {
                return true;
            }
        } else {
            run = 0;
        }
    }
    s.trim().is_empty()
}

fn text_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Tokens of a math expression: commands, numbers, single letters, symbols.
fn tokenize(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\\' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_ascii_alphabetic() {
                j += 1;
            }
            if j == i + 1 && j < chars.len() {
                j += 1;
            }
            out.push(chars[i..j].iter().collect());
            i = j;
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            out.push(chars[i..j].iter().collect());
            i = j;
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    canonical_tokens(out)
}

fn canonical_tokens(raw: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(raw.len());
    let mut iter = raw.into_iter().peekable();
    while let Some(t) = iter.next() {
        match t.as_str() {
            "\\cdot" | "\\times" => out.push("*".into()),
            "\\frac" | "\\sqrt" | "^" | "_" => {
                let arity = if t == "\\frac" { 2 } else { 1 };
                out.push(t);
                let mut pending: Vec<String> = Vec::new();
                for _ in 0..arity {
                    if pending.is_empty() {
                        match iter.peek().map(String::as_str) {
                            Some("{") | Some("[") | None => break,
                            _ => {}
                        }
                        let next = iter.next().expect("peeked");
                        // \frac12 means \frac{1}{2}
                        if arity == 2 && next.len() > 1 && next.chars().all(|c| c.is_ascii_digit()) {
                            pending = next.chars().map(String::from).collect();
                            pending.reverse();
                        } else {
                            pending.push(next);
                        }
                    }
                    let arg = pending.pop().expect("non-empty");
                    out.extend(["{".to_string(), arg, "}".to_string()]);
                }
                pending.reverse();
                if !pending.is_empty() {
                    out.push(pending.concat());
                }
            }
            _ => out.push(t),
        }
    }
    out
}

/// Sorts top-level summands and the factors of each summand.
fn commutative_key(tokens: &[String]) -> Vec<(bool, String)> {
    let mut terms: Vec<(bool, Vec<String>)> = Vec::new();
    let mut depth = 0i32;
    let mut neg = false;
    let mut cur: Vec<String> = Vec::new();
    for t in tokens {
        match t.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            _ => {}
        }
        if depth == 0 && (t == "+" || t == "-") && !cur.is_empty() {
            terms.push((neg, std::mem::take(&mut cur)));
            neg = t == "-";
        } else if depth == 0 && (t == "+" || t == "-") {
            neg ^= t == "-";
        } else {
            cur.push(t.clone());
        }
    }
    if !cur.is_empty() {
        terms.push((neg, cur));
    }
    let mut keyed: Vec<(bool, String)> = terms
        .into_iter()
        .map(|(neg, toks)| {
            let mut factors: Vec<String> = Vec::new();
            let mut depth = 0i32;
            let mut f = String::new();
            for t in &toks {
                match t.as_str() {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth -= 1,
                    _ => {}
                }
                if depth == 0 && t == "*" {
                    factors.push(std::mem::take(&mut f));
                } else {
                    f.push_str(t);
                    f.push(' ');
                }
            }
            factors.push(f);
            factors.sort();
            (neg, factors.join("* "))
        })
        .collect();
    keyed.sort();
    keyed
}

impl Verifier {
    pub fn new(tolerance: Tolerance) -> Self {
        Self { tolerance }
    }

    pub fn normalize(&self, raw: &str, choices: Option<&[ChoiceOption]>) -> AnswerForm {
        AnswerForm {
            value: normalize_value(raw, choices),
            source: raw.to_string(),
        }
    }

    pub fn equivalent(&self, a: &AnswerForm, b: &AnswerForm) -> Verdict {
        use AnswerValue as V;
        let verdict = |correct: bool, method: Method| Verdict {
            correct,
            method,
            detail: format!("{} {} {}", a.render(), if correct { "==" } else { "!=" }, b.render()),
        };
        match (&a.value, &b.value) {
            (V::Rational(x), V::Rational(y)) => verdict(x == y, Method::RationalExact),
            (V::IntegerSet(x), V::IntegerSet(y)) => verdict(x == y, Method::RationalExact),
            (V::Choice(x), V::Choice(y)) => verdict(x == y, Method::Choice),
            (V::Symbolic(x), V::Symbolic(y)) => {
                verdict(commutative_key(x) == commutative_key(y), Method::SymbolicCanonical)
            }
            _ => match (a.numeric(), b.numeric()) {
                (Some(x), Some(y)) => verdict(self.tolerance.within(&x, &y), Method::DecimalTolerance),
                _ => verdict(text_key(&a.render()) == text_key(&b.render()), Method::TextExact),
            },
        }
    }

    pub fn verify(&self, predicted: Option<&str>, gold: &str, choices: Option<&[ChoiceOption]>) -> Verdict {
        match predicted {
            None => Verdict {
                correct: false,
                method: Method::TextExact,
                detail: "no answer extracted".into(),
            },
            Some(p) => self.equivalent(&self.normalize(p, choices), &self.normalize(gold, choices)),
        }
    }
}

pub fn normalize(raw: &str, choices: Option<&[ChoiceOption]>) -> AnswerForm {
    Verifier::default().normalize(raw, choices)
}

pub fn equivalent(a: &AnswerForm, b: &AnswerForm) -> Verdict {
    Verifier::default().equivalent(a, b)
}

pub fn verify(predicted: Option<&str>, gold: &str, choices: Option<&[ChoiceOption]>) -> Verdict {
    Verifier::default().verify(predicted, gold, choices)
}

/// Verdict for one parsed segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentVerdict {
    pub prompt_id: String,
    pub sample_index: u32,
    pub question_index: usize,
    pub question_id: String,
    pub predicted: Option<String>,
    pub verdict: Verdict,
}

impl SegmentVerdict {
    pub fn key(&self) -> (&str, u32, usize) {
        (&self.prompt_id, self.sample_index, self.question_index)
    }
}

/// Verifies every segment of every trace against the corpus gold answers,
/// in trace then segment order.
pub fn verify_traces(traces: &[ParsedTrace], corpus: &Corpus, verifier: &Verifier) -> Result<Vec<SegmentVerdict>> {
    let per_trace = par::map(traces, |t| {
        t.segments
            .iter()
            .map(|s| {
                let (gold, choices) = if s.question_id == TOY_QUESTION_ID {
                    (TOY_ANSWER, None)
                } else {
                    let q = corpus
                        .get(&s.question_id)
                        .ok_or_else(|| Error::UnknownQuestion(s.question_id.clone()))?;
                    (q.gold_answer.as_str(), q.choices.as_deref())
                };
                Ok(SegmentVerdict {
                    prompt_id: t.prompt_id.clone(),
                    sample_index: t.sample_index,
                    question_index: s.question_index,
                    question_id: s.question_id.clone(),
                    predicted: s.predicted_answer.clone(),
                    verdict: verifier.verify(s.predicted_answer.as_deref(), gold, choices),
                })
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::new();
    for v in per_trace {
        out.extend(v?);
    }
    Ok(out)
}

fn normalize_value(raw: &str, choices: Option<&[ChoiceOption]>) -> AnswerValue {
    let s = clean(raw);

    if let Some(opts) = choices.filter(|c| !c.is_empty()) {
        if let Some(c) = CHOICE_LETTER.captures(&s) {
            let letter = c[1].to_ascii_uppercase();
            if opts.iter().any(|o| o.label.eq_ignore_ascii_case(&letter)) {
                return AnswerValue::Choice(letter);
            }
        }
        let key = text_key(&s);
        if let Some(o) = opts.iter().find(|o| text_key(&clean(&o.text)) == key) {
            return AnswerValue::Choice(o.label.to_ascii_uppercase());
        }
    }

    if let Some(c) = PERCENT.captures(&s) {
        let n = &c[1];
        let d = if n.contains('.') { decimal(n) } else { parse_int(n).map(|m| DecimalValue::new(m, 0)) };
        if let Some(d) = d {
            return AnswerValue::Decimal(DecimalValue::new(d.mantissa, d.exponent - 2));
        }
    }

    let s = if THOUSANDS.is_match(&s) { s.replace(',', "") } else { s };

    if INTEGER.is_match(&s) {
        if let Some(n) = parse_int(&s) {
            return AnswerValue::Rational(BigRational::from_integer(n));
        }
    }
    if let Some(d) = decimal(&s) {
        return AnswerValue::Decimal(d);
    }
    if let Some(c) = SLASH_FRACTION.captures(&s) {
        if let Some(r) = rational(&c[1], &c[2], false) {
            return AnswerValue::Rational(r);
        }
    }
    if let Some(c) = LATEX_FRACTION.captures(&s) {
        let num = c.get(2).or_else(|| c.get(3)).map_or("", |m| m.as_str());
        let den = c.get(4).or_else(|| c.get(5)).map_or("", |m| m.as_str());
        if let Some(r) = rational(num, den, &c[1] == "-") {
            return AnswerValue::Rational(r);
        }
    }

    let braced = s.strip_prefix("\\{").and_then(|x| x.strip_suffix("\\}"));
    let parts = top_level_commas(braced.unwrap_or(&s));
    if parts.len() >= 2 || braced.is_some() {
        let ints: Option<Vec<BigInt>> = parts
            .iter()
            .map(|p| p.trim())
            .map(|p| INTEGER.is_match(p).then(|| parse_int(p)).flatten())
            .collect();
        if let Some(mut ints) = ints {
            ints.sort();
            ints.dedup();
            return AnswerValue::IntegerSet(ints);
        }
    }

    if looks_like_text(&s) {
        AnswerValue::Text(text_key(&s))
    } else {
        AnswerValue::Symbolic(tokenize(&s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> AnswerValue {
        AnswerValue::Rational(BigRational::new(n.into(), d.into()))
    }

    fn choices() -> Vec<ChoiceOption> {
        ["A", "B", "C", "D"]
            .iter()
            .enumerate()
            .map(|(i, l)| ChoiceOption {
                label: l.to_string(),
                text: format!("option {i}"),
            })
            .collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("\\frac{1}{2}", None).value, r(1, 2));
        assert_eq!(normalize("1,000", None).value, r(1000, 1));
        let ch = choices();
        assert_eq!(normalize("(B)", Some(&ch)).value, AnswerValue::Choice("B".into()));
        assert_eq!(normalize("b", Some(&ch)).value, AnswerValue::Choice("B".into()));
        assert_eq!(normalize("option 2", Some(&ch)).value, AnswerValue::Choice("C".into()));
    }

    #[test]
    fn normalize_wrappers() {
        assert_eq!(normalize("$\\frac{3}{6}$", None).value, r(1, 2));
        assert_eq!(normalize("\\boxed{42}", None).value, r(42, 1));
        assert_eq!(normalize("42.", None).value, r(42, 1));
        assert_eq!(normalize("\\dfrac{-2}{4}", None).value, r(-1, 2));
        assert_eq!(normalize("-\\frac12", None).value, r(-1, 2));
        assert_eq!(normalize("6/-4", None).value, r(-3, 2));
        assert_eq!(normalize("x = 7", None).value, r(7, 1));
        assert_eq!(normalize("90^\\circ", None).value, r(90, 1));
        assert_eq!(normalize("\\$1{,}250", None).value, r(1250, 1));
        let sym = |x: &str| AnswerValue::Symbolic(x.split(' ').map(String::from).collect());
        assert_eq!(normalize("a \\leftarrow b", None).value, sym("a \\leftarrow b"));
        assert_eq!(normalize("\\\\a", None).value, sym("\\\\ a"));
        assert_eq!(normalize("\\text{Monday}", None).value, AnswerValue::Text("monday".into()));
        assert_eq!(
            normalize("50\\%", None).value,
            AnswerValue::Decimal(DecimalValue::new(5.into(), -1))
        );
        assert_eq!(
            normalize("\\{3, 1, 2\\}", None).value,
            AnswerValue::IntegerSet(vec![1.into(), 2.into(), 3.into()])
        );
        assert_eq!(normalize("1/0", None).kind(), AnswerKind::Symbolic);
    }

    #[test]
    fn equivalence_examples() {
        let v = Verifier::default();
        let half = normalize("1/2", None);
        let point5 = normalize("0.5", None);
        let verdict = v.equivalent(&half, &point5);
        assert!(verdict.correct);
        assert_eq!(verdict.method, Method::DecimalTolerance);

        let verdict = v.equivalent(&normalize("9", None), &normalize("9", None));
        assert!(verdict.correct);
        assert_eq!(verdict.method, Method::RationalExact);

        let verdict = v.equivalent(&normalize("1/3", None), &normalize("0.3333", None));
        assert!(!verdict.correct);
        assert_eq!(verdict.method, Method::DecimalTolerance);
    }

    #[test]
    fn verify_examples() {
        assert!(verify(Some("2"), "2", None).correct);
        let none = verify(None, "2", None);
        assert!(!none.correct);
        assert_eq!(none.detail, "no answer extracted");
        assert!(verify(Some("0.50"), "1/2", None).correct);
        assert!(verify(Some("50%"), "\\frac{1}{2}", None).correct);
        assert!(!verify(Some("3"), "2", None).correct);
    }

    #[test]
    fn symbolic_matching() {
        let eq = |a: &str, b: &str| equivalent(&normalize(a, None), &normalize(b, None)).correct;
        assert!(eq("2\\sqrt{3}", "2 \\sqrt 3"));
        assert!(eq("\\pi + 1", "1+\\pi"));
        assert!(eq("x^{2}", "x^2"));
        assert!(eq("3\\cdot\\pi", "\\pi \\times 3"));
        assert!(eq("a - b", "-b + a"));
        assert!(eq("\\frac{\\pi}{2}", "\\dfrac{\\pi}{2}"));
        assert!(eq("\\left( 1, 2 \\right)", "(1,2)"));
        assert!(!eq("a - b", "b - a"));
        assert!(!eq("(1,2)", "(2,1)"));
        assert!(eq("Yes", "yes."));
    }

    #[test]
    fn tolerance_from_floats_is_exact() {
        assert_eq!(Tolerance::new(1e-6, 1e-9), Tolerance::default());
        assert_eq!(Tolerance::new(2.5e3, 0.0).relative, BigRational::from_integer(2500.into()));
    }

    #[test]
    fn tolerance_band() {
        let t = Tolerance::default();
        let one = BigRational::one();
        let a = BigRational::new(1_000_000_001.into(), 1_000_000_000.into());
        assert!(t.within(&one, &a));
        let b = BigRational::new(1_000_010.into(), 1_000_000.into());
        assert!(!t.within(&one, &b));
        let tiny = BigRational::new(1.into(), 10_000_000_000i64.into());
        assert!(t.within(&BigRational::zero(), &tiny));
    }

    fn answer_like() -> impl Strategy<Value = String> {
        prop_oneof![
            "-?[0-9]{1,6}",
            "-?[0-9]{1,4}\\.[0-9]{1,6}",
            "[0-9]{1,3}/[1-9][0-9]{0,2}",
            "\\\\frac\\{[0-9]{1,3}\\}\\{[1-9][0-9]{0,2}\\}",
            "[0-9]{1,3}(\\.[0-9]{1,2})?\\\\?%",
            "[0-9]{1,2}(, [0-9]{1,2}){1,3}",
            "\\(?[A-Da-d]\\)?",
            "[a-z]{2,8}( [a-z]{2,6})?",
            "[0-9]?(\\\\sqrt\\{[0-9]\\}|\\\\pi|x\\^2|[a-z])( ?[+*-] ?[0-9a-z])*",
            "\\$?\\\\text\\{[A-Za-z ]{1,10}\\}\\$?",
            "\\PC{0,12}",
        ]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in answer_like()) {
            let ch = choices();
            for c in [None, Some(ch.as_slice())] {
                let once = normalize(&s, c);
                let twice = normalize(&once.render(), c);
                prop_assert_eq!(&twice.value, &once.value, "render {:?}", once.render());
            }
        }

        #[test]
        fn equivalence_is_symmetric(a in answer_like(), b in answer_like()) {
            let (fa, fb) = (normalize(&a, None), normalize(&b, None));
            prop_assert_eq!(equivalent(&fa, &fb).correct, equivalent(&fb, &fa).correct);
        }

        #[test]
        fn equivalence_is_reflexive(s in answer_like()) {
            let f = normalize(&s, None);
            prop_assert!(equivalent(&f, &f).correct);
        }
    }
}
