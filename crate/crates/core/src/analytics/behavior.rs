use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Planning,
    Exploration,
    Verification,
    Reflection,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Planning,
        Category::Exploration,
        Category::Verification,
        Category::Reflection,
    ];
}

/// Cue words and phrases per category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon(pub BTreeMap<Category, Vec<String>>);

impl Default for Lexicon {
    fn default() -> Self {
        let cues = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self(BTreeMap::from([
            (Category::Planning, cues(&["first", "plan", "let me start"])),
            (Category::Exploration, cues(&["what if", "alternatively", "another way"])),
            (Category::Verification, cues(&["check", "verify", "double-check"])),
            (Category::Reflection, cues(&["wait", "hmm", "hold on"])),
        ]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub count: usize,
    /// Matches per 100 whitespace-delimited words.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub categories: BTreeMap<Category, CategoryCount>,
    pub word_total: usize,
}

/// A lexicon compiled into one case-insensitive matcher per category.
#[derive(Debug, Clone)]
pub struct BehaviorMatcher {
    patterns: Vec<(Category, Regex)>,
}

fn cue_pattern(cue: &str) -> String {
    let body = cue.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+");
    let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
    let lead = if word(cue.chars().next()) { r"\b" } else { "" };
    let trail = if word(cue.chars().last()) { r"\b" } else { "" };
    format!("{lead}{body}{trail}")
}

impl BehaviorMatcher {
    pub fn new(lexicon: &Lexicon) -> Result<Self> {
        let mut patterns = Vec::new();
        for category in Category::ALL {
            let mut cues: Vec<&str> = lexicon
                .0
                .get(&category)
                .into_iter()
                .flatten()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .collect();
            if cues.is_empty() {
                return Err(Error::EmptyLexiconCategory(format!("{category:?}").to_lowercase()));
            }
            // Longest first so a phrase wins over a cue it contains.
            cues.sort_by_key(|c| std::cmp::Reverse(c.len()));
            let alt = cues.iter().map(|c| cue_pattern(c)).collect::<Vec<_>>().join("|");
            let re = Regex::new(&format!("(?i)(?:{alt})")).map_err(|e| Error::InvalidConfig(vec![e.to_string()]))?;
            patterns.push((category, re));
        }
        Ok(Self { patterns })
    }

    pub fn profile(&self, text: &str) -> BehaviorProfile {
        let word_total = text.split_whitespace().count();
        let categories = self
            .patterns
            .iter()
            .map(|(cat, re)| {
                let count = re.find_iter(text).count();
                let density = if word_total == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / word_total as f64
                };
                (*cat, CategoryCount { count, density })
            })
            .collect();
        BehaviorProfile { categories, word_total }
    }
}

/// Pools counts and words of several profiles.
pub fn aggregate_profiles(profiles: &[BehaviorProfile]) -> BehaviorProfile {
    let word_total: usize = profiles.iter().map(|p| p.word_total).sum();
    let categories = Category::ALL
        .into_iter()
        .map(|c| {
            let count: usize = profiles.iter().filter_map(|p| p.categories.get(&c)).map(|x| x.count).sum();
            let density = if word_total == 0 {
                0.0
            } else {
                100.0 * count as f64 / word_total as f64
            };
            (c, CategoryCount { count, density })
        })
        .collect();
    BehaviorProfile { categories, word_total }
}

pub fn behavior_profile(text: &str, lexicon: &Lexicon) -> Result<BehaviorProfile> {
    Ok(BehaviorMatcher::new(lexicon)?.profile(text))
}
