use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bundle() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/bundle")
}

fn cotpack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotpack"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn cotpack")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn config() -> String {
    bundle().join("config.toml").display().to_string()
}

/// Runs the bundle to completion under `root` and returns the run directory.
fn full_run(root: &Path, extra: &[&str]) -> PathBuf {
    let cfg = config();
    let mut args = vec!["run", "--config", &cfg, "--root", root.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = cotpack(&args);
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(stdout(&o).lines().next().unwrap())
}

#[test]
fn run_then_inspect() {
    let root = tempfile::tempdir().unwrap();
    let run_dir = full_run(root.path(), &[]);
    assert!(run_dir.join("curated.jsonl").is_file());
    let run_id = run_dir.file_name().unwrap().to_str().unwrap();
    let o = cotpack(&["inspect", run_id, "--root", root.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("curate   done"), "{text}");
    assert!(text.contains("emitted examples"), "{text}");

    let o = cotpack(&["inspect", run_dir.join("manifest.json").to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["run_id"], run_id);
}

#[test]
fn stage_commands_advance_one_stage_at_a_time() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path().to_str().unwrap();
    let o = cotpack(&["plan", "--config", &config(), "--root", r]);
    assert_eq!(code(&o), 0);
    let run_dir = PathBuf::from(stdout(&o).lines().next().unwrap());
    assert!(run_dir.join("plan.jsonl").is_file());
    assert!(!run_dir.join("generations.jsonl").exists());
    for stage in ["sample", "parse", "verify", "curate"] {
        let o = cotpack(&[stage, "--config", &config(), "--root", r]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(run_dir.join("curated.jsonl").is_file());
    assert!(!run_dir.join("analysis").exists());
}

#[test]
fn flags_override_the_config() {
    let root = tempfile::tempdir().unwrap();
    let run_dir = full_run(root.path(), &["--format", "plain", "--targets", "think-only", "--max-per-question", "2"]);
    let first = fs::read_to_string(run_dir.join("curated.jsonl")).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(line["prompt"].is_string() && line["completion"].is_string());
    assert!(!line["completion"].as_str().unwrap().contains("\\boxed"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("curate_report.json")).unwrap()).unwrap();
    assert!(report["examples"].as_u64().unwrap() <= 2 * 30);
}

#[test]
fn spot_verify() {
    let o = cotpack(&["verify", "--pred", "\\frac{1}{2}", "--gold", "0.5"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["correct"], true);
    let o = cotpack(&["verify", "--pred", "3", "--gold", "4"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["correct"], false);
}

#[test]
fn validation_errors_exit_1() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path().to_str().unwrap();
    assert_eq!(code(&cotpack(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&cotpack(&["frobnicate"])), 1);
    assert_eq!(code(&cotpack(&["run", "--config", &config(), "--root", r, "--condition", "bogus"])), 1);
    assert_eq!(code(&cotpack(&["run", "--config", &config(), "--root", r, "--family", "gpt2"])), 1);
    assert_eq!(code(&cotpack(&["run", "--config", &config(), "--root", r, "--n", "0"])), 1);
    assert_eq!(code(&cotpack(&["run", "--root", r, "--corpus", "/nonexistent.jsonl"])), 1);
    assert_eq!(code(&cotpack(&["inspect", "deadbeef", "--root", r])), 1);
    let out = root.path().join("reports");
    let o = cotpack(&["analyze", "delta", "--runs", "only-one", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
    let o = cotpack(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("inspect"));
}

#[test]
fn stage_failure_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path().to_str().unwrap();
    let o = cotpack(&["parse", "--config", &config(), "--root", r]);
    assert_eq!(code(&o), 0);
    let run_dir = PathBuf::from(stdout(&o).lines().next().unwrap());
    fs::write(run_dir.join("traces.jsonl"), "").unwrap();
    let o = cotpack(&["verify", "--config", &config(), "--root", r]);
    assert_eq!(code(&o), 2, "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cross_run_analyses() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path().to_str().unwrap();
    let a = full_run(root.path(), &[]);
    let b = full_run(root.path(), &["--max-per-question", "3"]);
    let (a, b) = (a.to_str().unwrap(), b.to_str().unwrap());
    let out = root.path().join("reports");
    let out_s = out.to_str().unwrap();

    let o = cotpack(&["analyze", "scaling", "--runs", a, b, "--out", out_s, "--root", r]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("scaling.csv").is_file());

    for kind in ["accuracy", "efficiency", "behavior", "difficulty"] {
        let o = cotpack(&["analyze", kind, "--runs", a, b, "--out", out_s, "--root", r]);
        assert_eq!(code(&o), 0, "{kind}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let rows: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("difficulty.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 5);

    let o = cotpack(&["analyze", "delta", "--runs", a, b, "--out", out_s, "--tok", "completion"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("delta.csv").is_file());
}

#[test]
fn delta_from_metric_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, acc: f64, tok: f64| {
        let p = dir.path().join(name);
        let body = serde_json::json!({"label": name, "benchmarks": {"MATH500": {"acc": acc, "tok": tok}}});
        fs::write(&p, body.to_string()).unwrap();
        p.display().to_string()
    };
    let base = write("base.json", 91.6, 3136.0);
    let run = write("run.json", 92.4, 1720.0);
    let out = dir.path().join("out");
    let o = cotpack(&["analyze", "delta", "--runs", &base, &run, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(t["delta_acc"], 0.8);
    assert!((t["delta_tok_pct"].as_f64().unwrap() + 45.153).abs() < 0.001);
}
