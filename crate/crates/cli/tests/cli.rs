use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn refres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refres")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn encode_writes_golden_parse() {
    let input = fixture("phone_screen.jsonl");
    let out = stdout(&refres(&["encode", "--input", input.to_str().unwrap()]));
    let line: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(line["id"], 1);
    let golden = std::fs::read_to_string(fixture("phone_screen.parse.txt")).unwrap();
    assert_eq!(line["parse_text"], golden.as_str());
}

#[test]
fn encode_cluster_and_skip_warning() {
    let dir = tempfile::tempdir().unwrap();
    let mixed = dir.path().join("mixed.jsonl");
    let text = [fixture("branch_clusters.jsonl"), fixture("conversational_samples.jsonl")]
        .iter()
        .map(|p| std::fs::read_to_string(p).unwrap())
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&mixed, text).unwrap();
    let output = dir.path().join("enc.jsonl");
    let out = refres(&[
        "encode",
        "--strategy",
        "cluster",
        "--input",
        mixed.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped 2"));
    let written = std::fs::read_to_string(output).unwrap();
    let line: serde_json::Value = serde_json::from_str(written.trim()).unwrap();
    assert_eq!(line["encodings"][0]["surrounding"][0], "Queen Anne");
    assert_eq!(line["encodings"][0]["distance_from_top"], 35.0);
}

#[test]
fn generate_then_evaluate_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synth.jsonl");
    let report = dir.path().join("report.json");
    let out = refres(&["generate", "--seed", "4", "--output", data.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("530 expanded queries"));

    let out = refres(&["evaluate", "--oracle", "--input", data.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["total"], 530);
    let table = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(table.starts_with("Model"));
    assert!(table.contains("100.0"));
}

#[test]
fn evaluate_constant_exits_zero_at_zero_accuracy() {
    let input = fixture("phone_screen.jsonl");
    let out = stdout(&refres(&["evaluate", "--constant", "0", "--input", input.to_str().unwrap()]));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["accuracy"], 0.0);
}

#[test]
fn evaluate_requires_a_resolver() {
    let input = fixture("phone_screen.jsonl");
    assert!(!refres(&["evaluate", "--input", input.to_str().unwrap()]).status.success());
}

#[test]
fn prompt_with_custom_rules_has_index_map() {
    let input = fixture("conversational_samples.jsonl");
    let rules = fixture("sample_rules.toml");
    let out = stdout(&refres(&[
        "prompt",
        "--seed",
        "3",
        "--input",
        input.to_str().unwrap(),
        "--rules",
        rules.to_str().unwrap(),
    ]));
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    let mut order: Vec<u64> = lines[0]["index_map"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    order.sort();
    assert_eq!(order, [1, 2, 3]);
    assert!(lines[0]["prompt"].as_str().unwrap().contains("Type: Local Business | Name: "));
    assert!(lines[0]["prompt"].as_str().unwrap().ends_with("Relevant entity:"));
}

#[test]
fn malformed_template_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "template: t1\nvariations:\n  play {song}\nslots:\n  song one | two\n").unwrap();
    let out = refres(&["generate", "--templates", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("line 5"), "{err}");
}
