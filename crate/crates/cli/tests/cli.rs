use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn gee(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gee"))
        .current_dir(dir)
        .args(args)
        .env_remove("GEE_API_KEY")
        .output()
        .expect("running gee")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets/mini_corpus.jsonl")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gee(dir.path(), &["--help"])), 0);
    assert_eq!(code(&gee(dir.path(), &[])), 1);
    assert_eq!(code(&gee(dir.path(), &["extract", "--bogus"])), 1);
    assert_eq!(code(&gee(dir.path(), &["--lang", "fr", "extract", "--input", "a", "--output", "b"])), 1);
}

#[test]
fn missing_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gee(dir.path(), &["extract", "--input", "nope.jsonl", "--output", "x.jsonl"]);
    assert_ne!(code(&out), 0);
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn empty_input_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("in.jsonl"), "").unwrap();
    let out = gee(dir.path(), &["preprocess", "--input", "in.jsonl", "--output", "p.jsonl"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("p.jsonl")).unwrap(), "");
    assert_eq!(read_json(&dir.path().join("p.stats.json"))["kept_pairs"], 0);
    let out = gee(dir.path(), &["extract", "--input", "p.jsonl", "--output", "e.jsonl"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn identical_pair_has_no_edits() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("in.jsonl"),
        "{\"id\":\"a\",\"lang\":\"de\",\"source\":\"Das ist gut.\",\"target\":\"Das ist gut.\"}\n",
    )
    .unwrap();
    let out = gee(dir.path(), &["extract", "--input", "in.jsonl", "--output", "e.jsonl"]);
    assert_eq!(code(&out), 0);
    let line: Value = serde_json::from_str(fs::read_to_string(dir.path().join("e.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(line["edits"], Value::Array(vec![]));
    assert_eq!(line["feasibility"], "feasible");
}

#[test]
fn malformed_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("in.jsonl"), "{\"id\": 1\n").unwrap();
    let out = gee(dir.path(), &["preprocess", "--input", "in.jsonl", "--output", "p.jsonl"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gold_without_edits_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("in.jsonl"),
        "{\"id\":\"a\",\"lang\":\"de\",\"source\":\"ich bin.\",\"target\":\"Ich bin.\"}\n",
    )
    .unwrap();
    assert_eq!(code(&gee(dir.path(), &["extract", "--input", "in.jsonl", "--output", "e.jsonl"])), 0);
    let out = gee(dir.path(), &["eval-edits", "--predictions", "e.jsonl", "--gold", "in.jsonl", "--report", "r.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn llm_mode_needs_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let out = gee(dir.path(), &["extract", "--mode", "llm", "--input", c.to_str().unwrap(), "--output", "e.jsonl"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_credential_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("gee.toml"),
        "[provider]\nkind = \"openai\"\nendpoint = \"http://127.0.0.1:9\"\nmodel = \"m\"\ncredential_env = \"GEE_API_KEY\"\n",
    )
    .unwrap();
    let c = corpus();
    let out = gee(
        dir.path(),
        &["--config", "gee.toml", "extract", "--mode", "llm", "--input", c.to_str().unwrap(), "--output", "e.jsonl"],
    );
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rule_pipeline_scores_the_mini_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let run = |args: &[&str]| {
        let out = gee(dir.path(), args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["preprocess", "--input", c.to_str().unwrap(), "--output", "p.jsonl"]);
    let stats = read_json(&dir.path().join("p.stats.json"));
    assert_eq!(stats["input_pairs"], 20);
    assert_eq!(stats["kept_pairs"], 19);
    run(&["extract", "--input", "p.jsonl", "--output", "e.jsonl"]);
    run(&["eval-edits", "--predictions", "e.jsonl", "--gold", "p.jsonl", "--report", "r.json"]);
    let r = read_json(&dir.path().join("r.json"));
    assert_eq!(r["tp"], 45);
    assert_eq!(r["fp"], 0);
    assert_eq!(r["fn"], 0);
    assert!(dir.path().join("r.html").exists());
    assert_eq!(fs::read_to_string(dir.path().join("r.queue.jsonl")).unwrap(), "");

    run(&["--lang", "zh", "extract", "--input", "p.jsonl", "--output", "zh.jsonl"]);
    let n = fs::read_to_string(dir.path().join("zh.jsonl")).unwrap().lines().count();
    assert_eq!(n, 4);
}

#[test]
fn annotation_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    for i in 0..10 {
        let label = if i < 9 { "fully_correct" } else { "wrong_edit_reason" };
        lines.push(format!("{{\"pair_id\":\"p{i}\",\"annotator\":\"a\",\"explanation_index\":0,\"label\":\"{label}\"}}"));
    }
    fs::write(dir.path().join("ann.jsonl"), lines.join("\n")).unwrap();
    let out = gee(dir.path(), &["report", "--annotations", "ann.jsonl", "--report", "rep.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let html = fs::read_to_string(dir.path().join("rep.html")).unwrap();
    assert!(html.contains("90.0"), "{html}");

    fs::write(dir.path().join("bad.jsonl"), "{\"pair_id\":\"p\",\"label\":\"so-so\"}\n").unwrap();
    let out = gee(dir.path(), &["report", "--annotations", "bad.jsonl", "--report", "rep2.json"]);
    assert_eq!(code(&out), 2);
}
