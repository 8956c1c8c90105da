use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::Value;

use crate::error::{Error, Result};

/// Counts reasoning tokens.
///
/// `WhitespaceApprox` counts each maximal run of word characters
/// (alphanumerics and `_`) as one token and every other non-whitespace
/// character as one token. It is additive over whitespace-joined text.
///
/// `Vocabulary` applies greedy longest-match against a user-supplied token
/// list. Unmatched whitespace is free; any other unmatched character costs
/// one token.
#[derive(Debug, Clone, Default)]
pub enum TokenCounter {
    #[default]
    WhitespaceApprox,
    Vocabulary(Arc<Vocabulary>),
}

#[derive(Debug)]
pub struct Vocabulary {
    pub path: PathBuf,
    tokens: HashSet<String>,
    max_chars: usize,
}

impl Vocabulary {
    pub fn from_tokens(path: PathBuf, tokens: impl IntoIterator<Item = String>) -> Self {
        let tokens: HashSet<String> = tokens.into_iter().filter(|t| !t.is_empty()).collect();
        let max_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1);
        Self {
            path,
            tokens,
            max_chars,
        }
    }

    /// Reads either a JSON object whose keys are tokens (optionally nested
    /// under `model.vocab`) or a plain file with one token per line.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingVocabulary(path.to_path_buf()));
        }
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = match serde_json::from_str::<Value>(&raw) {
            Ok(v) => {
                let map = v
                    .pointer("/model/vocab")
                    .and_then(Value::as_object)
                    .or_else(|| v.as_object())
                    .ok_or_else(|| {
                        Error::InvalidConfig(vec![format!(
                            "{} is JSON but not a token map",
                            path.display()
                        )])
                    })?;
                map.keys().cloned().collect()
            }
            Err(_) => raw.lines().map(str::to_string).collect(),
        };
        Ok(Self::from_tokens(path.to_path_buf(), tokens))
    }

    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut rest = text;
        while let Some(c) = rest.chars().next() {
            // candidate end offsets for 1..=max_chars characters
            let mut best = None;
            for (k, (i, ch)) in rest.char_indices().enumerate() {
                if k >= self.max_chars {
                    break;
                }
                let end = i + ch.len_utf8();
                if self.tokens.contains(&rest[..end]) {
                    best = Some(end);
                }
            }
            match best {
                Some(end) => {
                    n += 1;
                    rest = &rest[end..];
                }
                None => {
                    if !c.is_whitespace() {
                        n += 1;
                    }
                    rest = &rest[c.len_utf8()..];
                }
            }
        }
        n
    }
}

impl TokenCounter {
    /// `whitespace-approx` or `external:<vocab-path>`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        match spec {
            "whitespace-approx" => Ok(TokenCounter::WhitespaceApprox),
            s => match s.strip_prefix("external:") {
                Some(p) => Ok(TokenCounter::Vocabulary(Arc::new(Vocabulary::load(Path::new(p))?))),
                None => Err(Error::InvalidConfig(vec![format!("unknown counter {s:?}")])),
            },
        }
    }

    pub fn spec(&self) -> String {
        match self {
            TokenCounter::WhitespaceApprox => "whitespace-approx".into(),
            TokenCounter::Vocabulary(v) => format!("external:{}", v.path.display()),
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match self {
            TokenCounter::WhitespaceApprox => approx_count(text),
            TokenCounter::Vocabulary(v) => v.count(text),
        }
    }
}

fn approx_count(text: &str) -> usize {
    let mut n = 0;
    let mut in_word = false;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b < 0x80 {
            i += 1;
            if b.is_ascii_alphanumeric() || b == b'_' {
                if !in_word {
                    n += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !b.is_ascii_whitespace() {
                    n += 1;
                }
            }
        } else {
            let c = text[i..].chars().next().expect("char boundary");
            i += c.len_utf8();
            if c.is_alphanumeric() {
                if !in_word {
                    n += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn approx_examples() {
        let c = TokenCounter::WhitespaceApprox;
        assert_eq!(c.count(""), 0);
        assert_eq!(c.count("1 + 1 = 2"), 5);
        assert_eq!(c.count("don't stop"), 4);
        assert_eq!(c.count("\\frac{1}{2}"), 8);
        assert_eq!(c.count("naïve × café"), 3);
    }

    #[test]
    fn vocabulary_greedy_longest_match() {
        let v = Vocabulary::from_tokens(
            "mem".into(),
            ["ab", "abc", "c", "d", " "].into_iter().map(String::from),
        );
        let c = TokenCounter::Vocabulary(Arc::new(v));
        assert_eq!(c.count("abcd"), 2);
        assert_eq!(c.count("abab"), 2);
        assert_eq!(c.count("xab"), 2);
        assert_eq!(c.count(""), 0);
    }

    #[test]
    fn vocabulary_files() {
        let dir = tempfile::tempdir().unwrap();
        let lines = dir.path().join("vocab.txt");
        std::fs::write(&lines, "the\nquick\n").unwrap();
        let c = TokenCounter::from_spec(&format!("external:{}", lines.display())).unwrap();
        assert_eq!(c.count("the quick"), 2);

        let json = dir.path().join("tokenizer.json");
        std::fs::write(&json, r#"{"model":{"vocab":{"qu":0,"ick":1}}}"#).unwrap();
        let c = TokenCounter::from_spec(&format!("external:{}", json.display())).unwrap();
        assert_eq!(c.count("quick"), 2);

        match TokenCounter::from_spec("external:/nonexistent/vocab.txt") {
            Err(Error::MissingVocabulary(_)) => {}
            other => panic!("{other:?}"),
        }
        assert!(TokenCounter::from_spec("bpe").is_err());
    }

    proptest! {
        #[test]
        fn approx_additive(a in "\\PC{0,40}", b in "\\PC{0,40}") {
            let c = TokenCounter::WhitespaceApprox;
            prop_assert_eq!(c.count(&format!("{a} {b}")), c.count(&a) + c.count(&b));
        }
    }
}
