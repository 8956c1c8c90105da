//! Loading and validating single-question corpora from JSONL files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// A labeled option of a multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub label: String,
    pub text: String,
}

/// One single-question item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub text: String,
    /// Ground truth exactly as authored; normalization happens in the verifier.
    pub gold_answer: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<ChoiceOption>>,
}

/// Field-name overrides for corpora that do not use the canonical names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaOptions {
    pub id: String,
    pub text: String,
    pub gold_answer: String,
    pub dataset: String,
    pub level: String,
    pub subject: String,
    pub choices: String,
    /// Used when a record carries no dataset field.
    pub default_dataset: Option<String>,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            id: "id".into(),
            text: "text".into(),
            gold_answer: "gold_answer".into(),
            dataset: "dataset".into(),
            level: "level".into(),
            subject: "subject".into(),
            choices: "choices".into(),
            default_dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// An immutable, validated collection of questions in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<QuestionRecord>,
    index: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(records: Vec<QuestionRecord>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { records, index })
    }

    pub fn records(&self) -> &[QuestionRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&QuestionRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub errors: Vec<LineError>,
}

pub fn load_corpus(path: &Path, schema: &SchemaOptions) -> Result<LoadReport> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&raw, schema)
}

/// Parses JSONL text. Malformed lines and lines missing required fields are
/// reported and skipped; a duplicate id aborts the load.
pub fn parse_corpus(raw: &str, schema: &SchemaOptions) -> Result<LoadReport> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                errors.push(LineError {
                    line: line_no,
                    message: format!("malformed json: {e}"),
                });
                continue;
            }
        };
        match record_from_value(&value, schema) {
            Ok(rec) => {
                if !seen.insert(rec.id.clone()) {
                    return Err(Error::DuplicateId(rec.id));
                }
                records.push(rec);
            }
            Err(message) => errors.push(LineError {
                line: line_no,
                message,
            }),
        }
    }
    Ok(LoadReport {
        corpus: Corpus::new(records)?,
        errors,
    })
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn record_from_value(v: &Value, schema: &SchemaOptions) -> std::result::Result<QuestionRecord, String> {
    let obj = v.as_object().ok_or("line is not a JSON object")?;
    let required = |field: &str| -> std::result::Result<String, String> {
        let s = obj
            .get(field)
            .and_then(scalar_string)
            .ok_or_else(|| format!("missing required field {field:?}"))?;
        if s.trim().is_empty() {
            return Err(format!("field {field:?} is empty"));
        }
        Ok(s)
    };
    let id = required(&schema.id)?;
    let text = required(&schema.text)?;
    let gold_answer = required(&schema.gold_answer)?;
    let dataset = match obj.get(&schema.dataset).and_then(scalar_string) {
        Some(d) if !d.trim().is_empty() => d,
        _ => schema
            .default_dataset
            .clone()
            .ok_or_else(|| format!("missing required field {:?}", schema.dataset))?,
    };
    let level = match obj.get(&schema.level) {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_level(v)?),
    };
    let subject = obj.get(&schema.subject).and_then(scalar_string);
    let choices = match obj.get(&schema.choices) {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_choices(v)?),
    };
    Ok(QuestionRecord {
        id,
        text,
        gold_answer,
        dataset,
        level,
        subject,
        choices,
    })
}

/// Accepts `3`, `"3"` and MATH-style `"Level 3"`.
fn parse_level(v: &Value) -> std::result::Result<u8, String> {
    let n = match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s
            .trim()
            .trim_start_matches("Level")
            .trim_start_matches("level")
            .trim()
            .parse::<u64>()
            .ok(),
        _ => None,
    };
    match n {
        Some(n @ 1..=5) => Ok(n as u8),
        _ => Err(format!("level {v} is not in 1..=5")),
    }
}

fn parse_choices(v: &Value) -> std::result::Result<Vec<ChoiceOption>, String> {
    let label = |i: usize| ((b'A' + i as u8) as char).to_string();
    match v {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, item)| match item {
                Value::String(s) => Ok(ChoiceOption {
                    label: label(i),
                    text: s.clone(),
                }),
                Value::Object(_) => serde_json::from_value(item.clone())
                    .map_err(|e| format!("bad choice option: {e}")),
                _ => Err("choice options must be strings or {label,text}".to_string()),
            })
            .collect(),
        Value::Object(map) => Ok(map
            .iter()
            .map(|(k, v)| ChoiceOption {
                label: k.clone(),
                text: scalar_string(v).unwrap_or_default(),
            })
            .collect()),
        _ => Err("choices must be a list or an object".into()),
    }
}

/// Writes the corpus in canonical field names, one record per line.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(corpus_to_jsonl(corpus)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for r in corpus.records() {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StratifyKey {
    Level,
    Dataset,
    Subject,
}

pub const UNLABELED: &str = "unlabeled";

/// Groups record ids by a field value. Records without the field land in
/// the [`UNLABELED`] bucket.
pub fn stratify(corpus: &Corpus, key: StratifyKey) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in corpus.records() {
        let bucket = match key {
            StratifyKey::Level => r.level.map(|l| l.to_string()),
            StratifyKey::Dataset => Some(r.dataset.clone()),
            StratifyKey::Subject => r.subject.clone(),
        }
        .unwrap_or_else(|| UNLABELED.to_string());
        out.entry(bucket).or_default().push(r.id.clone());
    }
    out
}
