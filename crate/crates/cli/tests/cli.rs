use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SQUARE: &str = r#"{"buyers":[{"id":"b1","budget":3},{"id":"b2","budget":"5/2"}],"goods":["g1","g2"],"utilities":[["b1","g1",2],["b1","g2",1],["b2","g2",4]]}"#;

fn arctic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arctic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn solve_to(dir: &TempDir, instance: &str, extra: &[&str]) -> (Output, PathBuf) {
    let input = write(dir, "instance.json", instance);
    let out = dir.path().join("out.json");
    let mut args = vec!["solve", "--input", s(&input), "--output", s(&out)];
    args.extend_from_slice(extra);
    (arctic(&args), out)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn both_algorithms_agree_in_the_document() {
    let dir = TempDir::new().unwrap();
    let (run, out) = solve_to(&dir, SQUARE, &["--algorithm", "both", "--seed", "3"]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let doc = read_json(&out);
    let runs = &doc["runs"];
    assert_eq!(runs["weak"]["equilibrium"], runs["strong"]["equilibrium"]);
    assert_eq!(doc["equilibrium"], runs["weak"]["equilibrium"]);
    assert!(doc["stats"]["strong"]["abundant_edges"].as_u64().unwrap() <= 3);
    assert_eq!(doc["perturbation"]["seed"], 3);
}

#[test]
fn forced_price_on_one_by_one() {
    let dir = TempDir::new().unwrap();
    let inst = r#"{"buyers":[{"id":"b1","budget":1}],"goods":["g1"],"utilities":[["b1","g1",2]]}"#;
    let (run, out) = solve_to(&dir, inst, &["--algorithm", "weak"]);
    assert!(run.status.success());
    let doc = read_json(&out);
    assert_eq!(doc["equilibrium"]["prices"]["g1"], "1");
    assert_eq!(doc["equilibrium"]["refunds"]["b1"], "0");
    assert!(doc["runs"].get("strong").is_none());
}

#[test]
fn missing_input_is_an_input_error() {
    let run = arctic(&["solve", "--input", "/nonexistent/instance.json"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("cannot read"));
}

#[test]
fn invalid_instance_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let (run, _) = solve_to(&dir, r#"{"buyers":[],"goods":["g1"],"utilities":[]}"#, &[]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn exhausted_retries_exit_with_two() {
    // Identical buyers without perturbation: E(p) always has a 4-cycle.
    let dir = TempDir::new().unwrap();
    let inst = r#"{"buyers":[{"id":"b1","budget":1},{"id":"b2","budget":1}],"goods":["g1","g2"],"utilities":[["b1","g1",1],["b1","g2",1],["b2","g1",1],["b2","g2",1]]}"#;
    let (run, _) = solve_to(&dir, inst, &["--perturb", "0", "--max-retries", "2"]);
    assert_eq!(
        run.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
}

#[test]
fn verify_accepts_solve_output() {
    let dir = TempDir::new().unwrap();
    let (run, out) = solve_to(&dir, SQUARE, &["--seed", "11"]);
    assert!(run.status.success());
    let input = dir.path().join("instance.json");
    let check = arctic(&["verify", "--input", s(&input), "--solution", s(&out)]);
    assert!(
        check.status.success(),
        "{}",
        String::from_utf8_lossy(&check.stdout)
    );
}

#[test]
fn verify_rejects_tampered_prices() {
    let dir = TempDir::new().unwrap();
    let (_, out) = solve_to(&dir, SQUARE, &[]);
    let mut doc = read_json(&out);
    doc["equilibrium"]["prices"]["g1"] = Value::from("7");
    let bad = write(&dir, "bad.json", &doc.to_string());
    let input = dir.path().join("instance.json");
    let check = arctic(&["verify", "--input", s(&input), "--solution", s(&bad)]);
    assert_eq!(check.status.code(), Some(1));
    let cert: Value = serde_json::from_slice(&check.stdout).unwrap();
    let failed: Vec<&str> = cert["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"market_clearing"));
}

#[test]
fn verify_rejects_unparsable_solution() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "instance.json", SQUARE);
    let bad = write(&dir, "bad.json", "{ not json");
    let check = arctic(&["verify", "--input", s(&input), "--solution", s(&bad)]);
    assert_eq!(check.status.code(), Some(1));
}

#[test]
fn verify_without_perturbation_uses_raw_instance() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "instance.json",
        r#"{"buyers":[{"id":"b1","budget":3}],"goods":["g1"],"utilities":[["b1","g1",2]]}"#,
    );
    let sol = r#"{"equilibrium":{"prices":{"g1":"2"},"spending":[["b1","g1","2"]],"refunds":{"b1":"1"}},"certificate":{"checks":[]}}"#;
    let sol = write(&dir, "sol.json", sol);
    let check = arctic(&["verify", "--input", s(&input), "--solution", s(&sol)]);
    assert!(check.status.success());
}

#[test]
fn same_seed_same_bytes() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "instance.json", SQUARE);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(format!("{name}.json"));
        let trace = dir.path().join(format!("{name}.jsonl"));
        let run = arctic(&[
            "solve",
            "--input",
            s(&input),
            "--output",
            s(&out),
            "--trace",
            s(&trace),
            "--seed",
            "5",
        ]);
        assert!(run.status.success());
        outputs.push((fs::read(&out).unwrap(), fs::read(&trace).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn trace_rows_keep_potential_discipline() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "instance.json", SQUARE);
    let trace = dir.path().join("t.jsonl");
    let run = arctic(&["solve", "--input", s(&input), "--trace", s(&trace)]);
    assert!(run.status.success());
    let text = fs::read_to_string(&trace).unwrap();
    let mut inner = 0;
    for line in text.lines() {
        let row: Value = serde_json::from_str(line).unwrap();
        assert!(row["algorithm"] == "weak" || row["algorithm"] == "strong");
        if ["refund", "augment_buyer", "augment_good"].contains(&row["kind"].as_str().unwrap()) {
            inner += 1;
            assert_eq!(
                row["phi_before"].as_i64().unwrap() - row["phi_after"].as_i64().unwrap(),
                1
            );
        }
    }
    assert!(inner > 0);
}

#[test]
fn bench_rows_and_header() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("bench.csv");
    let run = arctic(&[
        "bench",
        "--sizes",
        "6,10",
        "--trials",
        "3",
        "--algorithm",
        "strong",
        "--csv",
        s(&csv),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("n,m,trial,algorithm,phases,augmentations,restarts,abundant_edges,wall_ms")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        let n: usize = row[0].parse().unwrap();
        let abundant: usize = row[7].parse().unwrap();
        assert!(abundant < n);
        assert_eq!(row[3], "strong");
    }
}

#[test]
fn bench_both_emits_a_row_per_algorithm() {
    let run = arctic(&["bench", "--sizes", "5", "--trials", "2"]);
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    let algos: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(algos, ["weak", "strong", "weak", "strong"]);
}
