use std::path::PathBuf;
use std::process::Command;

use serde_json::{json, Value};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> String {
    root().join("tests/fixtures").join(name).to_string_lossy().into_owned()
}

fn validator(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(root().join(format!("schemas/{name}.json"))).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    jsonschema::draft202012::new(&schema).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(args: &[&str]) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_ecta")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn assert_valid(schema: &str, value: &Value) {
    let v = validator(schema);
    let errors: Vec<String> = v.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}");
}

#[test]
fn every_schema_compiles() {
    for entry in std::fs::read_dir(root().join("schemas")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        validator(&name);
    }
}

#[test]
fn cli_outputs_match_schemas() {
    let corpus = fixture("corpus.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("pred.jsonl");
    let preds = preds.to_str().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ecta"))
        .args(["generate", "--corpus", &corpus, "--mock-table", &fixture("mock_extraction.jsonl"), "--out", preds])
        .output()
        .unwrap();
    assert!(out.status.success());

    assert_valid("validation", &run(&["validate", "--corpus", &corpus]));
    assert_valid(
        "prompt_digest",
        &run(&["render-prompt", "--corpus", &corpus, "--doc-id", "zh-1", "--digest"]),
    );
    assert_valid(
        "prompt_digest",
        &run(&["render-prompt", "--kind", "augmentation", "--corpus", &corpus, "--doc-id", "zh-1", "--digest"]),
    );
    assert_valid("fold_plan", &run(&["kfold", "--corpus", &corpus, "--k", "4"]));
    assert_valid("fold_summary", &run(&["kfold", "--corpus", &corpus, "--k", "4", "--predictions", preds]));
    assert_valid("metrics_report", &run(&["eval", "--predictions", preds, "--gold", &corpus]));
    assert_valid(
        "metrics_report",
        &run(&["eval", "--predictions", preds, "--gold", &corpus, "--policy", "penalize", "--tokenizer", "char"]),
    );
    assert_valid(
        "metrics_delta",
        &run(&["compare", "--a", &fixture("reports/uie.json"), "--b", &fixture("reports/instruda_glm.json")]),
    );
    assert_valid("lora_demo", &run(&["lora-demo", "--json", "--epochs", "3"]));
    assert_valid(
        "augmentation_report",
        &run(&["augment", "--corpus", &corpus, "--mock-table", &fixture("mock_augmentation.jsonl")]),
    );
}

#[test]
fn triplet_parse_schema_covers_issue_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("out.txt");
    std::fs::write(&input, "chatter\n(a, b, Excited)\n(, b, Fear)\n(a, Fear)\n1. (a, b, Fear)\n").unwrap();
    let v = run(&["parse-output", "--input", input.to_str().unwrap()]);
    assert_eq!(v["issues"].as_array().unwrap().len(), 4);
    assert_valid("triplet_parse", &v);
}

#[test]
fn schemas_reject_malformed_reports() {
    let corpus = fixture("corpus.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.txt");
    std::fs::write(&pred, "(afraid, spending the night alone, Fear)\n").unwrap();
    let report = run(&["eval", "--pred", pred.to_str().unwrap(), "--doc-id", "case-2", "--gold", &corpus]);
    let metrics = validator("metrics_report");
    assert!(metrics.is_valid(&report));

    let mut bad = report.clone();
    bad["span"]["f1"] = json!(1.5);
    assert!(!metrics.is_valid(&bad));
    let mut bad = report.clone();
    bad["counts"]["triplets"]["ct"] = json!(-1);
    assert!(!metrics.is_valid(&bad));
    let mut bad = report.clone();
    bad.as_object_mut().unwrap().remove("word");
    assert!(!metrics.is_valid(&bad));
    let mut bad = report;
    bad["extra"] = json!(true);
    assert!(!metrics.is_valid(&bad));

    let plan = validator("fold_plan");
    assert!(!plan.is_valid(&json!({"k": 1, "seed": 0, "assignments": []})));
    assert!(!plan.is_valid(&json!({"k": 2, "seed": 0, "assignments": [["a", 0, 1]]})));
    let digest = validator("prompt_digest");
    assert!(!digest.is_valid(&json!({"template": "x", "digest": "abc", "turns": []})));
}
