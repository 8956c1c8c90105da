//! Deterministic replay bundle shared by the integration tests and the
//! `make_fixture` example that writes it to `tests/fixtures/bundle`.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cotpack_core::ingest::{write_corpus, QuestionRecord};
use cotpack_core::pipeline::{Config, PlanMode, Pipeline, RunHooks, Stage};
use cotpack_core::sampler::{cache_key, CompletionResponse, FinishReason, Usage};
use cotpack_core::{Corpus, PromptSpec};

pub const MODEL: &str = "fixture-model";
pub const QUESTIONS: usize = 30;

pub fn bundle_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bundle")
}

/// Gold answers in the forms a grader meets: integers, fractions, decimals.
fn gold_for(i: usize) -> String {
    match i % 5 {
        0 => format!("{}", 3 * i + 2),
        1 => format!("\\frac{{{}}}{{{}}}", i, i + 3),
        2 => format!("{}.5", i),
        3 => format!("-{}", i + 1),
        _ => format!("{}", i * i),
    }
}

/// The same value rendered differently, as a model might write it.
fn restyled(i: usize, gold: &str) -> String {
    match i % 5 {
        1 => format!("{}/{}", i, i + 3),
        2 => format!("\\frac{{{}}}{{2}}", 2 * i + 1),
        _ => gold.to_string(),
    }
}

fn wrong_for(i: usize) -> String {
    format!("{}", 1000 + i)
}

pub fn corpus_records() -> Vec<QuestionRecord> {
    (0..QUESTIONS)
        .map(|i| QuestionRecord {
            id: format!("fx-{i:03}"),
            text: format!("Compute quantity number {i} from the given data, and give the exact value."),
            gold_answer: gold_for(i),
            dataset: if i < 20 { "math500" } else { "gsm8k" }.into(),
            level: Some((i % 5 + 1) as u8),
            subject: None,
            choices: None,
        })
        .collect()
}

pub fn corpus() -> Corpus {
    Corpus::new(corpus_records()).unwrap()
}

/// Run settings for the bundle in `dir`.
pub fn fixture_config(dir: &Path) -> Config {
    let mut c = Config::default();
    c.corpus.path = dir.join("corpus.jsonl");
    c.plan.n = 3;
    c.plan.seed = 7;
    c.plan.mode = PlanMode::Cover;
    c.sample.model = MODEL.into();
    c.sample.replay_dir = Some(dir.join("replay"));
    c.sample.max_tokens = Some(4096);
    c.sample.samples = 8;
    c.sample.budget = 4;
    c.sample.retry_delays_secs = Vec::new();
    c
}

fn index_of(id: &str) -> usize {
    id.trim_start_matches("fx-").parse().unwrap()
}

const FILLER: &[&str] = &[
    "I'll write down what is given before doing anything else.",
    "Hmm, the numbers look small enough to handle by hand.",
    "Let me set up the expression carefully.",
    "Multiplying out the terms gives a cleaner form.",
    "Wait, I should double-check the sign here.",
    "That simplifies nicely once the common factor is removed.",
    "Let me verify the arithmetic one more time.",
    "Alternatively, I could approach it from the other side.",
];

/// One synthetic multi-question generation. Most samples anchor each
/// question; every fourth uses bare `---` separators. Roughly one sample in
/// seven gets a wrong answer, and a few are cut off by the token limit.
pub fn synth_response(spec: &PromptSpec, sample: u32, key: &str) -> CompletionResponse {
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_str_radix(&key[..16], 16).unwrap());
    let anchored = sample % 4 != 3;
    let truncate = rng.gen_ratio(1, 12);
    let mut think = String::from("<think>\n");
    let mut answers = Vec::new();
    for (k, qid) in spec.question_ids.iter().enumerate() {
        let i = index_of(qid);
        let gold = gold_for(i);
        let ans = if rng.gen_ratio(1, 7) { wrong_for(i) } else { restyled(i, &gold) };
        if k > 0 {
            think.push_str(if anchored { "\n\n" } else { "\n\n---\n\n" });
        }
        if anchored {
            think.push_str(&format!("Question {}: ", k + 1));
        }
        think.push_str(&format!("This asks for quantity number {i}."));
        for _ in 0..rng.gen_range(2..9) {
            think.push(' ');
            think.push_str(FILLER[rng.gen_range(0..FILLER.len())]);
        }
        think.push_str(&format!(" So the answer is {ans}."));
        answers.push(ans);
        if truncate && k + 1 == spec.n() {
            // Cut mid-way through the last question.
            let cut = think.rfind(" So the answer").unwrap();
            think.truncate(cut);
            let words = think.split_whitespace().count() as u64;
            return CompletionResponse {
                text: think,
                finish_reason: FinishReason::Length,
                usage: Usage {
                    prompt_tokens: 60,
                    completion_tokens: words,
                },
            };
        }
    }
    think.push_str("\n</think>\n\n");
    for (k, a) in answers.iter().enumerate() {
        think.push_str(&format!("**Question {}:** \\boxed{{{a}}}\n\n", k + 1));
    }
    let text = think.trim_end().to_string();
    let words = text.split_whitespace().count() as u64;
    CompletionResponse {
        text,
        finish_reason: FinishReason::Stop,
        usage: Usage {
            prompt_tokens: 60,
            completion_tokens: words,
        },
    }
}

/// Writes corpus, config and replay entries into `dir`, returning the number
/// of replay entries.
pub fn write_bundle(dir: &Path) -> usize {
    let replay = dir.join("replay");
    if replay.exists() {
        fs::remove_dir_all(&replay).unwrap();
    }
    fs::create_dir_all(&replay).unwrap();
    write_corpus(&corpus(), &dir.join("corpus.jsonl")).unwrap();

    let config = fixture_config(dir);
    let mut shipped = config.clone();
    shipped.corpus.path = "corpus.jsonl".into();
    shipped.sample.replay_dir = Some("replay".into());
    fs::write(dir.join("config.toml"), shipped.to_toml().unwrap()).unwrap();

    let scratch = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(scratch.path(), config.clone(), RunHooks::default()).unwrap();
    p.run_through(Stage::Plan).unwrap();
    let plan = p.load_plan().unwrap();
    let params = config.materialize().decode_params();
    let backend = cotpack_core::sampler::ReplayBackend::new(&replay);
    let mut count = 0;
    for spec in &plan {
        for s in 0..params.samples {
            let key = cache_key(spec, &params, s, MODEL);
            backend.store(&key, &synth_response(spec, s, &key)).unwrap();
            count += 1;
        }
    }
    count
}
