//! Multi-question prompt construction, control-condition prompts and
//! chat-template rendering.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{Corpus, QuestionRecord};
use crate::par;

/// Model family; selects the chat template and the reasoning-span tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Qwen3,
    R1Distill,
    SeedOss,
    ErnieThinking,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Qwen3,
        Family::R1Distill,
        Family::SeedOss,
        Family::ErnieThinking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Qwen3 => "qwen3",
            Family::R1Distill => "r1-distill",
            Family::SeedOss => "seed-oss",
            Family::ErnieThinking => "ernie-thinking",
        }
    }

    /// Open and close tags of the reasoning span.
    pub fn think_tags(self) -> (&'static str, &'static str) {
        match self {
            Family::SeedOss => ("<seed:think>", "</seed:think>"),
            _ => ("<think>", "</think>"),
        }
    }

    /// Default generation ceiling for this family.
    pub fn default_max_tokens(self) -> u32 {
        match self {
            Family::R1Distill => 16_384,
            _ => 32_768,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::UnsupportedFamily(s.to_string()))
    }
}

/// The system instruction shared by every shipped template.
pub const REASONING_INSTRUCTION: &str =
    "Please reason step by step, and put your final answer within \\boxed{}.";

/// Text of the trivial second question used by the toy control.
pub const TOY_QUESTION: &str = "1+1=?";
pub const TOY_QUESTION_ID: &str = "aux:toy";
pub const TOY_ANSWER: &str = "2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Condition {
    MultiQuestion(usize),
    Statement,
    EmptyQuestion,
    ConciseInstruction,
    AuxToy,
    AuxEasy,
    AuxMedium,
    AuxHard,
    AuxRandom,
}

impl Condition {
    pub fn is_control(self) -> bool {
        !matches!(self, Condition::MultiQuestion(_))
    }

    /// Inclusive level range drawn from for auxiliary-question controls.
    pub fn aux_levels(self) -> Option<(u8, u8)> {
        match self {
            Condition::AuxEasy => Some((1, 2)),
            Condition::AuxMedium => Some((3, 3)),
            Condition::AuxHard => Some((4, 5)),
            _ => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::MultiQuestion(n) => write!(f, "multi-{n}"),
            Condition::Statement => f.write_str("statement"),
            Condition::EmptyQuestion => f.write_str("empty-question"),
            Condition::ConciseInstruction => f.write_str("concise-instruction"),
            Condition::AuxToy => f.write_str("aux-toy"),
            Condition::AuxEasy => f.write_str("aux-easy"),
            Condition::AuxMedium => f.write_str("aux-medium"),
            Condition::AuxHard => f.write_str("aux-hard"),
            Condition::AuxRandom => f.write_str("aux-random"),
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "statement" => Condition::Statement,
            "empty-question" => Condition::EmptyQuestion,
            "concise-instruction" => Condition::ConciseInstruction,
            "aux-toy" | "toy" => Condition::AuxToy,
            "aux-easy" | "easy" => Condition::AuxEasy,
            "aux-medium" | "medium" => Condition::AuxMedium,
            "aux-hard" | "hard" => Condition::AuxHard,
            "aux-random" | "random" => Condition::AuxRandom,
            other => match other.strip_prefix("multi-").map(str::parse::<usize>) {
                Some(Ok(n)) if n >= 1 => Condition::MultiQuestion(n),
                _ => return Err(Error::UnknownCondition(s.to_string())),
            },
        })
    }
}

impl TryFrom<String> for Condition {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.to_string()
    }
}

/// Wording of the controls that change the prompt without adding a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlTexts {
    pub statement: String,
    pub empty_question: String,
    pub concise_instruction: String,
}

impl Default for ControlTexts {
    fn default() -> Self {
        Self {
            statement: "Note: this is one of several tasks in this session.".into(),
            empty_question: "Question 2:".into(),
            concise_instruction: "Please keep your reasoning concise.".into(),
        }
    }
}

/// Chat templates keyed by family. A template holds exactly one `{input}`
/// placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<Family, String>,
}

pub const PLACEHOLDER: &str = "{input}";

impl Default for TemplateSet {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(Family::Qwen3, include_str!("../templates/qwen3.tmpl").to_string());
        templates.insert(
            Family::R1Distill,
            include_str!("../templates/r1-distill.tmpl").to_string(),
        );
        Self { templates }
    }
}

impl TemplateSet {
    /// Shipped templates, overridden by any `<family>.tmpl` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for family in Family::ALL {
            let path = dir.join(format!("{}.tmpl", family.as_str()));
            if path.exists() {
                let t = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                set.insert(family, t)?;
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, family: Family, template: String) -> Result<()> {
        if template.matches(PLACEHOLDER).count() != 1 {
            return Err(Error::InvalidConfig(vec![format!(
                "template for {family} must contain exactly one {PLACEHOLDER}"
            )]));
        }
        self.templates.insert(family, template);
        Ok(())
    }

    pub fn get(&self, family: Family) -> Option<&str> {
        self.templates.get(&family).map(String::as_str)
    }

    pub fn render(&self, family: Family, body: &str) -> Result<String> {
        let t = self
            .get(family)
            .ok_or_else(|| Error::UnsupportedFamily(family.to_string()))?;
        let (head, tail) = t.split_once(PLACEHOLDER).expect("validated on insert");
        let mut out = String::with_capacity(head.len() + body.len() + tail.len());
        out.push_str(head);
        out.push_str(body);
        out.push_str(tail);
        Ok(out)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PackOptions {
    pub templates: TemplateSet,
    pub controls: ControlTexts,
    /// Prefix single-question prompts with "Question: ".
    pub single_prefix: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub question_ids: Vec<String>,
    pub condition: Condition,
    pub family: Family,
    pub body: String,
    pub rendered: String,
    /// 1-based position of the question under measurement.
    pub target_position: usize,
}

impl PromptSpec {
    pub fn n(&self) -> usize {
        self.question_ids.len()
    }

    fn assemble(
        question_ids: Vec<String>,
        condition: Condition,
        family: Family,
        body: String,
        target_position: usize,
        opts: &PackOptions,
    ) -> Result<Self> {
        let rendered = opts.templates.render(family, &body)?;
        let prompt_id = prompt_id(condition, &question_ids, family, &body);
        Ok(Self {
            prompt_id,
            question_ids,
            condition,
            family,
            body,
            rendered,
            target_position,
        })
    }
}

fn prompt_id(condition: Condition, ids: &[String], family: Family, body: &str) -> String {
    let mut h = Sha256::new();
    for part in [condition.to_string().as_str(), family.as_str()] {
        h.update(part.as_bytes());
        h.update([0x1f]);
    }
    for id in ids {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
    }
    h.update([0x1e]);
    h.update(body.as_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Body of an N-question prompt: numbered questions separated by a blank line.
pub fn multi_question_body<'a>(texts: impl IntoIterator<Item = &'a str>) -> String {
    let mut body = String::new();
    for (i, t) in texts.into_iter().enumerate() {
        if i > 0 {
            body.push_str("\n\n");
        }
        body.push_str(&format!("Question {}: {}", i + 1, t));
    }
    body
}

pub fn pack(questions: &[&QuestionRecord], family: Family, opts: &PackOptions) -> Result<PromptSpec> {
    if questions.is_empty() {
        return Err(Error::EmptyQuestions);
    }
    let mut seen = HashSet::new();
    for q in questions {
        if !seen.insert(q.id.as_str()) {
            return Err(Error::DuplicateId(q.id.clone()));
        }
    }
    let n = questions.len();
    let body = if n == 1 {
        if opts.single_prefix {
            format!("Question: {}", questions[0].text)
        } else {
            questions[0].text.clone()
        }
    } else {
        multi_question_body(questions.iter().map(|q| q.text.as_str()))
    };
    let ids = questions.iter().map(|q| q.id.clone()).collect();
    PromptSpec::assemble(ids, Condition::MultiQuestion(n), family, body, 1, opts)
}

pub fn build_control_prompt(
    target: &QuestionRecord,
    condition: Condition,
    aux_pool: &Corpus,
    seed: u64,
    family: Family,
    opts: &PackOptions,
) -> Result<PromptSpec> {
    let controls = &opts.controls;
    let (ids, body) = match condition {
        Condition::MultiQuestion(_) => {
            return Err(Error::UnknownCondition(format!("{condition} is not a control")))
        }
        Condition::Statement => (
            vec![target.id.clone()],
            format!("{}\n\n{}", target.text, controls.statement),
        ),
        Condition::ConciseInstruction => (
            vec![target.id.clone()],
            format!("{}\n\n{}", target.text, controls.concise_instruction),
        ),
        Condition::EmptyQuestion => (
            vec![target.id.clone()],
            format!("Question 1: {}\n\n{}", target.text, controls.empty_question),
        ),
        Condition::AuxToy => (
            vec![target.id.clone(), TOY_QUESTION_ID.to_string()],
            multi_question_body([target.text.as_str(), TOY_QUESTION]),
        ),
        Condition::AuxEasy | Condition::AuxMedium | Condition::AuxHard | Condition::AuxRandom => {
            let band = condition.aux_levels();
            let candidates: Vec<&QuestionRecord> = aux_pool
                .records()
                .iter()
                .filter(|r| r.id != target.id)
                .filter(|r| match band {
                    Some((lo, hi)) => r.level.is_some_and(|l| (lo..=hi).contains(&l)),
                    None => true,
                })
                .collect();
            if candidates.is_empty() {
                return Err(Error::EmptyAuxPool(condition.to_string()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let aux = candidates[rng.gen_range(0..candidates.len())];
            (
                vec![target.id.clone(), aux.id.clone()],
                multi_question_body([target.text.as_str(), aux.text.as_str()]),
            )
        }
    };
    PromptSpec::assemble(ids, condition, family, body, 1, opts)
}

pub fn render_template(spec: &PromptSpec, templates: &TemplateSet) -> Result<String> {
    templates.render(spec.family, &spec.body)
}

fn group_rng(seed: u64, group: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(group as u64);
    rng
}

/// `groups` prompts of `n` distinct questions each, drawn uniformly without
/// replacement per group. Group `g` uses its own stream of the seeded
/// generator, so the plan does not depend on evaluation order.
pub fn plan_batches(
    corpus: &Corpus,
    n: usize,
    family: Family,
    groups: usize,
    seed: u64,
    opts: &PackOptions,
) -> Result<Vec<PromptSpec>> {
    check_plan_size(corpus, n)?;
    let records = corpus.records();
    par::map_range(groups, |g| {
        let picks = index::sample(&mut group_rng(seed, g), records.len(), n);
        let qs: Vec<&QuestionRecord> = picks.iter().map(|i| &records[i]).collect();
        pack(&qs, family, opts)
    })
    .into_iter()
    .collect()
}

/// Shuffles the corpus once and chunks it into prompts of `n`, so every
/// question appears at least once. A short final chunk is topped up with
/// questions drawn from the rest of the corpus.
pub fn plan_cover(
    corpus: &Corpus,
    n: usize,
    family: Family,
    seed: u64,
    opts: &PackOptions,
) -> Result<Vec<PromptSpec>> {
    check_plan_size(corpus, n)?;
    let records = corpus.records();
    let mut rng = group_rng(seed, usize::MAX);
    let order: Vec<usize> = index::sample(&mut rng, records.len(), records.len()).into_vec();
    let mut chunks: Vec<Vec<usize>> = order.chunks(n).map(<[usize]>::to_vec).collect();
    if let Some(last) = chunks.last_mut() {
        if last.len() < n {
            let rest: Vec<usize> = order.iter().copied().filter(|i| !last.contains(i)).collect();
            let extra = index::sample(&mut rng, rest.len(), n - last.len());
            last.extend(extra.iter().map(|j| rest[j]));
        }
    }
    chunks
        .iter()
        .map(|c| {
            let qs: Vec<&QuestionRecord> = c.iter().map(|&i| &records[i]).collect();
            pack(&qs, family, opts)
        })
        .collect()
}

/// One control prompt per target for `groups` targets taken from a seeded
/// shuffle of the corpus (cycling when `groups` exceeds its size).
pub fn plan_controls(
    corpus: &Corpus,
    condition: Condition,
    family: Family,
    groups: usize,
    seed: u64,
    opts: &PackOptions,
) -> Result<Vec<PromptSpec>> {
    check_plan_size(corpus, 1)?;
    let records = corpus.records();
    let mut rng = group_rng(seed, usize::MAX);
    let order = index::sample(&mut rng, records.len(), records.len()).into_vec();
    par::map_range(groups, |g| {
        let target = &records[order[g % order.len()]];
        let aux_seed = group_rng(seed, g).next_u64();
        build_control_prompt(target, condition, corpus, aux_seed, family, opts)
    })
    .into_iter()
    .collect()
}

fn check_plan_size(corpus: &Corpus, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig(vec!["n must be at least 1".into()]));
    }
    if corpus.len() < n {
        return Err(Error::CorpusTooSmall {
            have: corpus.len(),
            need: n,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use regex::Regex;

    fn q(id: &str, text: &str) -> QuestionRecord {
        QuestionRecord {
            id: id.into(),
            text: text.into(),
            gold_answer: "1".into(),
            dataset: "math".into(),
            level: None,
            subject: None,
            choices: None,
        }
    }

    fn leveled(id: &str, level: u8) -> QuestionRecord {
        QuestionRecord {
            level: Some(level),
            ..q(id, &format!("text of {id}"))
        }
    }

    fn opts() -> PackOptions {
        PackOptions::default()
    }

    #[test]
    fn pack_two_questions() {
        let (a, b) = (q("a", "1+1=?"), q("b", "1*1=?"));
        let spec = pack(&[&a, &b], Family::R1Distill, &opts()).unwrap();
        assert_eq!(spec.body, "Question 1: 1+1=?\n\nQuestion 2: 1*1=?");
        assert_eq!(spec.condition, Condition::MultiQuestion(2));
        assert_eq!(spec.question_ids, ["a", "b"]);
    }

    #[test]
    fn pack_single_question_is_bare() {
        let text = "How many positive whole-number divisors does 196 have?";
        let spec = pack(&[&q("m", text)], Family::Qwen3, &opts()).unwrap();
        assert_eq!(spec.body, text);
        let prefixed = PackOptions {
            single_prefix: true,
            ..opts()
        };
        let spec = pack(&[&q("m", text)], Family::Qwen3, &prefixed).unwrap();
        assert_eq!(spec.body, format!("Question: {text}"));
    }

    #[test]
    fn pack_three_has_three_markers() {
        let qs = [q("a", "x"), q("b", "y"), q("c", "z")];
        let refs: Vec<_> = qs.iter().collect();
        let spec = pack(&refs, Family::Qwen3, &opts()).unwrap();
        let re = Regex::new(r"Question \d+:").unwrap();
        assert_eq!(re.find_iter(&spec.body).count(), 3);
    }

    #[test]
    fn pack_rejects_bad_input() {
        assert!(matches!(pack(&[], Family::Qwen3, &opts()), Err(Error::EmptyQuestions)));
        let a = q("a", "x");
        match pack(&[&a, &a], Family::Qwen3, &opts()) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn control_prompts() {
        let t = q("t", "What is 2+3?");
        let pool = Corpus::new(vec![leveled("e", 1), leveled("m", 3), leveled("h", 5)]).unwrap();
        let f = Family::Qwen3;

        let toy = build_control_prompt(&t, Condition::AuxToy, &pool, 0, f, &opts()).unwrap();
        assert_eq!(toy.body, "Question 1: What is 2+3?\n\nQuestion 2: 1+1=?");
        assert_eq!(toy.target_position, 1);

        let concise =
            build_control_prompt(&t, Condition::ConciseInstruction, &pool, 0, f, &opts()).unwrap();
        assert_eq!(concise.body, "What is 2+3?\n\nPlease keep your reasoning concise.");
        assert_eq!(concise.question_ids, ["t"]);

        let statement = build_control_prompt(&t, Condition::Statement, &pool, 0, f, &opts()).unwrap();
        assert_eq!(
            statement.body,
            "What is 2+3?\n\nNote: this is one of several tasks in this session."
        );

        let empty = build_control_prompt(&t, Condition::EmptyQuestion, &pool, 0, f, &opts()).unwrap();
        assert_eq!(empty.body, "Question 1: What is 2+3?\n\nQuestion 2:");

        for (cond, want) in [
            (Condition::AuxEasy, "e"),
            (Condition::AuxMedium, "m"),
            (Condition::AuxHard, "h"),
        ] {
            let s = build_control_prompt(&t, cond, &pool, 7, f, &opts()).unwrap();
            assert_eq!(s.question_ids, ["t", want]);
        }

        let r1 = build_control_prompt(&t, Condition::AuxRandom, &pool, 42, f, &opts()).unwrap();
        let r2 = build_control_prompt(&t, Condition::AuxRandom, &pool, 42, f, &opts()).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn control_prompt_errors() {
        let t = q("t", "x");
        let pool = Corpus::new(vec![leveled("e", 1)]).unwrap();
        assert!(matches!(
            build_control_prompt(&t, Condition::AuxHard, &pool, 0, Family::Qwen3, &opts()),
            Err(Error::EmptyAuxPool(_))
        ));
        assert!(matches!(
            build_control_prompt(&t, Condition::MultiQuestion(2), &pool, 0, Family::Qwen3, &opts()),
            Err(Error::UnknownCondition(_))
        ));
        assert!("bogus".parse::<Condition>().is_err());
        assert_eq!("multi-3".parse::<Condition>().unwrap(), Condition::MultiQuestion(3));
    }

    #[test]
    fn templates_render() {
        let t = TemplateSet::default();
        let body = "B";
        let qwen = t.render(Family::Qwen3, body).unwrap();
        assert!(qwen.starts_with("<|im_start|>system\n"));
        assert!(qwen.contains("\\boxed{}"));
        let r1 = t.render(Family::R1Distill, body).unwrap();
        assert!(r1.contains("<|User|>B"));
        assert!(matches!(
            t.render(Family::SeedOss, body),
            Err(Error::UnsupportedFamily(_))
        ));
        assert!("mystery".parse::<Family>().is_err());
    }

    #[test]
    fn template_overrides_are_validated() {
        let mut t = TemplateSet::default();
        assert!(t.insert(Family::SeedOss, "no placeholder".into()).is_err());
        t.insert(Family::SeedOss, "<s>{input}</s>".into()).unwrap();
        assert_eq!(t.render(Family::SeedOss, "x").unwrap(), "<s>x</s>");
    }

    fn corpus(n: usize) -> Corpus {
        Corpus::new((0..n).map(|i| q(&format!("q{i}"), &format!("question {i}"))).collect()).unwrap()
    }

    #[test]
    fn plan_small_corpus() {
        let c = corpus(3);
        let plan = plan_batches(&c, 3, Family::Qwen3, 1, 9, &opts()).unwrap();
        assert_eq!(plan.len(), 1);
        let mut ids = plan[0].question_ids.clone();
        ids.sort();
        assert_eq!(ids, ["q0", "q1", "q2"]);
        assert_eq!(plan, plan_batches(&c, 3, Family::Qwen3, 1, 9, &opts()).unwrap());
        assert!(matches!(
            plan_batches(&corpus(2), 3, Family::Qwen3, 1, 0, &opts()),
            Err(Error::CorpusTooSmall { have: 2, need: 3 })
        ));
    }

    #[test]
    fn plan_cover_touches_every_question() {
        let c = corpus(10);
        let plan = plan_cover(&c, 3, Family::Qwen3, 5, &opts()).unwrap();
        assert_eq!(plan.len(), 4);
        let seen: HashSet<_> = plan.iter().flat_map(|p| p.question_ids.iter().cloned()).collect();
        assert_eq!(seen.len(), 10);
        assert!(plan.iter().all(|p| p.n() == 3));
        assert!(plan.iter().all(|p| {
            let s: HashSet<_> = p.question_ids.iter().collect();
            s.len() == 3
        }));
    }

    #[test]
    fn plan_controls_one_target_per_group() {
        let c = Corpus::new((0..6).map(|i| leveled(&format!("q{i}"), 1 + i as u8 % 5)).collect()).unwrap();
        let plan = plan_controls(&c, Condition::AuxRandom, Family::Qwen3, 8, 3, &opts()).unwrap();
        assert_eq!(plan.len(), 8);
        let targets: HashSet<_> = plan.iter().map(|p| p.question_ids[0].clone()).collect();
        assert_eq!(targets.len(), 6);
        assert!(plan.iter().all(|p| p.question_ids.len() == 2 && p.question_ids[0] != p.question_ids[1]));
        assert_eq!(plan, plan_controls(&c, Condition::AuxRandom, Family::Qwen3, 8, 3, &opts()).unwrap());

        let concise = plan_controls(&c, Condition::ConciseInstruction, Family::Qwen3, 2, 3, &opts()).unwrap();
        assert!(concise.iter().all(|p| p.condition == Condition::ConciseInstruction && p.n() == 1));
    }

    proptest! {
        #[test]
        fn markers_in_order(texts in prop::collection::vec("[a-z0-9 +=?]{1,20}", 2..8)) {
            let qs: Vec<_> = texts.iter().enumerate().map(|(i, t)| q(&format!("id{i}"), t)).collect();
            let refs: Vec<_> = qs.iter().collect();
            let spec = pack(&refs, Family::Qwen3, &opts()).unwrap();
            let re = Regex::new(r"Question (\d+):").unwrap();
            let found: Vec<usize> = re.captures_iter(&spec.body).map(|c| c[1].parse().unwrap()).collect();
            prop_assert_eq!(found, (1..=texts.len()).collect::<Vec<_>>());
        }

        #[test]
        fn rendering_is_injective(a in "\\PC{0,30}", b in "\\PC{0,30}") {
            let t = TemplateSet::default();
            for f in [Family::Qwen3, Family::R1Distill] {
                let (ra, rb) = (t.render(f, &a).unwrap(), t.render(f, &b).unwrap());
                prop_assert_eq!(ra == rb, a == b);
            }
        }

        #[test]
        fn prompt_id_is_structural(seed in 0u64..1000) {
            let c = corpus(12);
            let plan = plan_batches(&c, 3, Family::R1Distill, 20, seed, &opts()).unwrap();
            for x in &plan {
                for y in &plan {
                    if x.prompt_id == y.prompt_id {
                        prop_assert_eq!(x, y);
                    }
                }
            }
        }
    }
}
