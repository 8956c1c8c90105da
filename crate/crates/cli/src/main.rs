//! `cotpack`: multi-question prompting pipeline over a run directory.
//!
//! Exit codes: 0 success, 1 invalid input or config, 2 stage failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cotpack_core::analytics::{
    delta_table, difficulty_breakdown, relative_accuracy, scaling_summary, write_json, BehaviorMatcher,
    BenchmarkMetrics, RunMetrics,
};
use cotpack_core::curator::{SftFormat, TargetKind};
use cotpack_core::pipeline::{
    accuracy_summary, inspect, load_run, locate_manifest, open_existing, write_behavior, write_efficiency,
    write_scaling, Config, Pipeline, RunData, RunHooks, Stage,
};
use cotpack_core::verifier::{Tolerance, Verifier};
use cotpack_core::{Condition, Error, Family, TokenCounter};

#[derive(Parser)]
#[command(name = "cotpack", version, about = "Multi-question prompting pipeline for reasoning models")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the corpus.
    Ingest(RunArgs),
    /// Pack questions into prompts.
    Plan(RunArgs),
    /// Sample every planned prompt.
    Sample(RunArgs),
    /// Split generations into per-question traces.
    Parse(RunArgs),
    /// Check predicted answers, or spot-check one pair with --pred/--gold.
    Verify(VerifyArgs),
    /// Emit the fine-tuning corpus.
    Curate(RunArgs),
    /// Statistics for one run, or across finished runs with --runs.
    Analyze(AnalyzeArgs),
    /// Run every stage.
    Run(RunArgs),
    /// Show stage states and funnel counts of a run.
    Inspect(InspectArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding `runs/` and the generation cache.
    #[arg(long, default_value = ".")]
    root: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Questions per prompt.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    family: Option<String>,
    /// multi-<n>, statement, empty-question, concise-instruction, aux-toy,
    /// aux-easy, aux-medium, aux-hard or aux-random.
    #[arg(long)]
    condition: Option<String>,
    /// Shuffle the corpus once instead of drawing independent groups.
    #[arg(long)]
    cover: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Maximum requests in flight.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Samples per prompt.
    #[arg(long)]
    samples: Option<u32>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// whitespace-approx or external:<vocabulary file>.
    #[arg(long)]
    counter: Option<String>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_enum)]
    targets: Option<TargetsArg>,
    #[arg(long)]
    max_per_question: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Conversational,
    Plain,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetsArg {
    ThinkOnly,
    ThinkPlusAnswer,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, requires = "gold")]
    pred: Option<String>,
    #[arg(long, requires = "pred")]
    gold: Option<String>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Analysis {
    Scaling,
    Accuracy,
    Efficiency,
    Behavior,
    Difficulty,
    Delta,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TokScope {
    Reasoning,
    Completion,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    kind: Option<Analysis>,
    /// Run manifests (or run directories); delta also takes metrics JSON files.
    #[arg(long, num_args = 1..)]
    runs: Vec<String>,
    /// Where cross-run reports are written.
    #[arg(long, default_value = "analysis")]
    out: PathBuf,
    /// Token column used by delta.
    #[arg(long, value_enum, default_value = "reasoning")]
    tok: TokScope,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct InspectArgs {
    /// Run id, run directory or manifest path.
    run: String,
    #[arg(long, default_value = ".")]
    root: PathBuf,
    /// Print the manifest as JSON.
    #[arg(long)]
    json: bool,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Invalid(String),
    Stage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::UnknownCondition(_)
            | Error::UnsupportedFamily(_)
            | Error::Manifest(_)
            | Error::MissingVocabulary(_) => Failure::Invalid(e.to_string()),
            other => Failure::Stage(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

/// Relative paths in a config file are taken relative to that file.
fn rebase(mut c: Config, base: &Path) -> Config {
    let fix = |p: &mut PathBuf| {
        if p.is_relative() && !p.as_os_str().is_empty() {
            *p = base.join(&*p);
        }
    };
    fix(&mut c.corpus.path);
    for p in [&mut c.sample.replay_dir, &mut c.sample.cache_dir, &mut c.plan.templates_dir]
        .into_iter()
        .flatten()
    {
        fix(p);
    }
    if let Some(path) = c.parse.counter.strip_prefix("external:") {
        let mut p = PathBuf::from(path);
        fix(&mut p);
        c.parse.counter = format!("external:{}", p.display());
    }
    c
}

fn build_config(a: &RunArgs) -> CliResult<Config> {
    let mut c = match &a.config {
        Some(p) => rebase(Config::load(p)?, p.parent().unwrap_or(Path::new("."))),
        None => Config::default(),
    };
    let mut errs = Vec::new();
    if let Some(v) = &a.corpus {
        c.corpus.path = v.clone();
    }
    if let Some(v) = a.n {
        c.plan.n = v;
    }
    if let Some(v) = a.groups {
        c.plan.groups = v;
    }
    if let Some(v) = a.seed {
        c.plan.seed = v;
    }
    if let Some(v) = &a.family {
        match v.parse::<Family>() {
            Ok(f) => c.plan.family = f,
            Err(e) => errs.push(e.to_string()),
        }
    }
    if let Some(v) = &a.condition {
        match v.parse::<Condition>() {
            Ok(cond) => c.plan.condition = Some(cond),
            Err(e) => errs.push(e.to_string()),
        }
    }
    if a.cover {
        c.plan.mode = cotpack_core::pipeline::PlanMode::Cover;
    }
    if let Some(v) = &a.endpoint {
        c.sample.endpoint = Some(v.clone());
    }
    if let Some(v) = &a.model {
        c.sample.model = v.clone();
    }
    if let Some(v) = a.budget {
        c.sample.budget = v;
    }
    if let Some(v) = &a.replay_dir {
        c.sample.replay_dir = Some(v.clone());
    }
    if let Some(v) = &a.cache_dir {
        c.sample.cache_dir = Some(v.clone());
    }
    if let Some(v) = a.samples {
        c.sample.samples = v;
    }
    if let Some(v) = a.max_tokens {
        c.sample.max_tokens = Some(v);
    }
    if let Some(v) = &a.counter {
        c.parse.counter = v.clone();
    }
    if let Some(v) = a.format {
        c.curate.format = match v {
            FormatArg::Conversational => SftFormat::Conversational,
            FormatArg::Plain => SftFormat::Plain,
        };
    }
    if let Some(v) = a.targets {
        c.curate.targets = match v {
            TargetsArg::ThinkOnly => TargetKind::ThinkOnly,
            TargetsArg::ThinkPlusAnswer => TargetKind::ThinkPlusAnswer,
        };
    }
    if let Some(v) = a.max_per_question {
        c.curate.max_per_question = Some(v);
    }
    // A bare --n with a multi-question condition from the file follows --n.
    if a.n.is_some() && a.condition.is_none() {
        if let Some(Condition::MultiQuestion(_)) = c.plan.condition {
            c.plan.condition = None;
        }
    }
    if !errs.is_empty() {
        return Err(Error::InvalidConfig(errs).into());
    }
    Ok(c)
}

fn run_stages(a: &RunArgs, last: Stage) -> CliResult {
    let config = build_config(a)?;
    let mut p = Pipeline::open(&a.root, config, RunHooks::default())?;
    let outcomes = p.run_through(last)?;
    for (stage, outcome) in outcomes {
        log::info!("{stage}: {outcome:?}");
    }
    println!("{}", p.run_dir().display());
    print!("{}", inspect(p.manifest()));
    Ok(())
}

fn verifier_for(c: &Config) -> Verifier {
    Verifier::new(Tolerance::new(c.verify.relative_tolerance, c.verify.absolute_tolerance))
}

fn verify_cmd(a: &VerifyArgs) -> CliResult {
    match (&a.pred, &a.gold) {
        (Some(pred), Some(gold)) => {
            let v = verifier_for(&Config::default()).verify(Some(pred), gold, None);
            println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
            Ok(())
        }
        _ => run_stages(&a.run, Stage::Verify),
    }
}

fn load_runs(queries: &[String], root: &Path) -> CliResult<Vec<RunData>> {
    queries
        .iter()
        .map(|q| Ok(load_run(&locate_manifest(root, q)?)?))
        .collect()
}

fn print_json<T: serde::Serialize>(v: &T) -> CliResult {
    println!("{}", serde_json::to_string_pretty(v).map_err(Error::from)?);
    Ok(())
}

/// A metrics JSON file, or a run whose metrics are computed.
fn metrics_for(query: &str, root: &Path) -> CliResult<RunMetrics> {
    let path = Path::new(query);
    if path.is_file() {
        let raw = std::fs::read_to_string(path).map_err(|e| invalid(format!("{query}: {e}")))?;
        if let Ok(m) = serde_json::from_str::<RunMetrics>(&raw) {
            return Ok(m);
        }
    }
    Ok(load_run(&locate_manifest(root, query)?)?.metrics()?)
}

fn with_tok_scope(mut m: RunMetrics, scope: TokScope) -> CliResult<RunMetrics> {
    if scope == TokScope::Completion {
        for (name, b) in m.benchmarks.iter_mut() {
            let tok = b
                .completion_tok
                .ok_or_else(|| invalid(format!("{}: no completion tokens for {name}", m.label)))?;
            *b = BenchmarkMetrics { tok, ..*b };
        }
    }
    Ok(m)
}

fn analyze_cmd(a: &AnalyzeArgs) -> CliResult {
    let Some(kind) = a.kind else {
        return run_stages(&a.run, Stage::Analyze);
    };
    if a.runs.is_empty() {
        return Err(invalid("analyze <kind> needs --runs"));
    }
    let root = &a.run.root;
    let out = &a.out;
    if matches!(kind, Analysis::Delta | Analysis::Difficulty) && a.runs.len() != 2 {
        return Err(invalid(format!("{kind:?} compares exactly two runs").to_lowercase()));
    }
    std::fs::create_dir_all(out).map_err(|e| invalid(format!("{}: {e}", out.display())))?;
    match kind {
        Analysis::Delta => {
            let base = with_tok_scope(metrics_for(&a.runs[0], root)?, a.tok)?;
            let run = with_tok_scope(metrics_for(&a.runs[1], root)?, a.tok)?;
            let table = delta_table(&base, &run)?;
            write_json(&out.join("delta.json"), &table)?;
            cotpack_core::analytics::write_csv(&out.join("delta.csv"), &table.rows)?;
            print_json(&table)
        }
        Analysis::Scaling => {
            let runs = load_runs(&a.runs, root)?;
            let mut groups = BTreeMap::new();
            for r in &runs {
                for (n, obs) in r.segment_lengths() {
                    groups.entry(n).or_insert_with(Vec::new).extend(obs);
                }
            }
            let edges = &runs[0].config.analyze.histogram_edges;
            let s = scaling_summary(&groups, edges)?;
            write_scaling(out, &s)?;
            print_json(&s.rows)
        }
        Analysis::Accuracy => {
            let runs = load_runs(&a.runs, root)?;
            let mut rows = Vec::new();
            let mut per_n = BTreeMap::new();
            for r in &runs {
                let s = accuracy_summary(r)?;
                per_n.insert(r.config.plan.n, s.avg_at_k.aggregate);
                rows.push(json!({
                    "run_id": r.run_id,
                    "n": r.config.plan.n,
                    "pass_at_1": s.pass_at_1.aggregate,
                    "avg_at_k": s.avg_at_k.aggregate,
                    "k": r.config.sample.samples,
                }));
            }
            let report = json!({
                "runs": rows,
                "relative": relative_accuracy(&per_n).ok(),
            });
            write_json(&out.join("accuracy.json"), &report)?;
            print_json(&report)
        }
        Analysis::Efficiency => {
            let mut summary = Vec::new();
            for r in load_runs(&a.runs, root)? {
                let counter = TokenCounter::from_spec(&r.config.parse.counter)?;
                let stats = r.efficiency(&counter, &verifier_for(&r.config));
                let etas: Vec<f64> = stats.iter().map(|s| s.eta).collect();
                summary.push(json!({
                    "run_id": r.run_id,
                    "count": stats.len(),
                    "mean_eta": cotpack_core::analytics::mean(&etas),
                }));
                let dir = out.join(&r.run_id);
                std::fs::create_dir_all(&dir).map_err(|e| invalid(e.to_string()))?;
                write_efficiency(&dir, stats)?;
            }
            print_json(&summary)
        }
        Analysis::Behavior => {
            let mut summary = BTreeMap::new();
            for r in load_runs(&a.runs, root)? {
                let matcher = BehaviorMatcher::new(&r.config.analyze.lexicon)?;
                let profiles = r.behavior(&matcher);
                let dir = out.join(&r.run_id);
                std::fs::create_dir_all(&dir).map_err(|e| invalid(e.to_string()))?;
                write_behavior(&dir, &profiles)?;
                summary.insert(r.run_id.clone(), profiles);
            }
            print_json(&summary)
        }
        Analysis::Difficulty => {
            let runs = load_runs(&a.runs, root)?;
            let mut levels = std::collections::HashMap::new();
            for r in &runs {
                for q in r.corpus.records() {
                    if let Some(l) = q.level {
                        levels.insert(q.id.clone(), l);
                    }
                }
            }
            let keep = |r: &RunData| -> CliResult<Vec<_>> {
                Ok(r.question_stats()?
                    .into_iter()
                    .filter(|s| levels.contains_key(&s.question_id))
                    .collect())
            };
            let rows = difficulty_breakdown(&keep(&runs[0])?, &keep(&runs[1])?, &levels)?;
            write_json(&out.join("difficulty.json"), &rows)?;
            print_json(&rows)
        }
    }
}

fn inspect_cmd(a: &InspectArgs) -> CliResult {
    let path = locate_manifest(&a.root, &a.run)?;
    let (m, _) = open_existing(&path)?;
    if a.json {
        print_json(&m)
    } else {
        print!("{}", inspect(&m));
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Ingest(a) => run_stages(a, Stage::Ingest),
        Command::Plan(a) => run_stages(a, Stage::Plan),
        Command::Sample(a) => run_stages(a, Stage::Sample),
        Command::Parse(a) => run_stages(a, Stage::Parse),
        Command::Verify(a) => verify_cmd(a),
        Command::Curate(a) => run_stages(a, Stage::Curate),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Run(a) => run_stages(a, Stage::Analyze),
        Command::Inspect(a) => inspect_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
