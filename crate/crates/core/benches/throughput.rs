//! Parse throughput: `par::map` (rayon when the `parallel` feature is on)
//! against a plain sequential loop, plus batch verification.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cotpack_core::ingest::QuestionRecord;
use cotpack_core::packer::{pack, PackOptions};
use cotpack_core::parser::parse_generation;
use cotpack_core::sampler::{FinishReason, Usage};
use cotpack_core::verifier::Verifier;
use cotpack_core::{par, DecodeParams, Family, GenerationRecord, PromptSpec, TokenCounter};

const WORDS: &[&str] = &["so", "we", "get", "x", "=", "3,", "wait", "check", "\\frac{1}{2}", "then", "hmm."];

fn spec() -> PromptSpec {
    let qs: Vec<QuestionRecord> = (0..3)
        .map(|i| QuestionRecord {
            id: format!("b{i}"),
            text: format!("question {i}"),
            gold_answer: "1".into(),
            dataset: "bench".into(),
            level: None,
            subject: None,
            choices: None,
        })
        .collect();
    let refs: Vec<&QuestionRecord> = qs.iter().collect();
    pack(&refs, Family::Qwen3, &PackOptions::default()).unwrap()
}

fn corpus(spec: &PromptSpec, traces: usize, words: usize) -> Vec<GenerationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..traces)
        .map(|i| {
            let mut text = String::from("<think>\n");
            for q in 1..=3 {
                text.push_str(&format!("Question {q}: "));
                for _ in 0..words / 3 {
                    text.push_str(WORDS[rng.gen_range(0..WORDS.len())]);
                    text.push(' ');
                }
                text.push_str(&format!("So the answer is {q}.\n\n"));
            }
            text.push_str("</think>\n\\boxed{1} \\boxed{2} \\boxed{3}");
            GenerationRecord {
                prompt_id: spec.prompt_id.clone(),
                sample_index: i as u32,
                raw_text: text,
                finish_reason: FinishReason::Stop,
                error: None,
                usage: Usage::default(),
                params: DecodeParams::default(),
                endpoint_model: "bench".into(),
                created_at: String::new(),
            }
        })
        .collect()
}

fn parse(c: &mut Criterion) {
    let spec = spec();
    let counter = TokenCounter::default();
    let mut group = c.benchmark_group("parse");
    group.sample_size(10);
    for traces in [256, 2048] {
        let gens = corpus(&spec, traces, 3000);
        let bytes: usize = gens.iter().map(|g| g.raw_text.len()).sum();
        group.throughput(Throughput::Bytes(bytes as u64));
        group.bench_with_input(BenchmarkId::new("sequential", traces), &gens, |b, gens| {
            b.iter(|| {
                let out: Vec<_> = gens.iter().map(|g| parse_generation(g, &spec, &counter)).collect();
                black_box(out)
            })
        });
        group.bench_with_input(BenchmarkId::new("par_map", traces), &gens, |b, gens| {
            b.iter(|| black_box(par::map(gens, |g| parse_generation(g, &spec, &counter))))
        });
    }
    group.finish();
}

fn verify(c: &mut Criterion) {
    let v = Verifier::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<(String, String)> = (0..20_000)
        .map(|_| {
            let (n, d) = (rng.gen_range(1..10_000), rng.gen_range(1..500));
            (format!("\\frac{{{n}}}{{{d}}}"), format!("{:.10}", n as f64 / d as f64))
        })
        .collect();
    let mut group = c.benchmark_group("verify");
    group.sample_size(10);
    group.throughput(Throughput::Elements(pairs.len() as u64));
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let out: Vec<bool> = pairs.iter().map(|(a, g)| v.verify(Some(a), g, None).correct).collect();
            black_box(out)
        })
    });
    group.bench_function("par_map", |b| {
        b.iter(|| black_box(par::map(&pairs, |(a, g)| v.verify(Some(a), g, None).correct)))
    });
    group.finish();
}

criterion_group!(benches, parse, verify);
criterion_main!(benches);
