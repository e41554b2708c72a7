use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::io::Write;

use serde_json::Value;
use tempfile::TempDir;

fn ippsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ippsm")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    model: PathBuf,
    train: PathBuf,
    test: PathBuf,
    sha: String,
}

/// A few hundred optimizer steps on a small synthetic leak: enough to exercise
/// every command, far too little to be a useful meter.
fn train_fixture(dir: TempDir, name: &str) -> Fixture {
    let corpus = dir.path().join("corpus.txt");
    ok(&ippsm(&["gen-corpus", "--observations", "5000", "--seed", "2", "--out", s(&corpus)]));
    let model = dir.path().join(name);
    let train = dir.path().join("train.txt");
    let test = dir.path().join("test.txt");
    let out = ok(&ippsm(&[
        "train", "--corpus", s(&corpus), "--out", s(&model), "--epochs", "2", "--steps-per-epoch", "10",
        "--batch-size", "32", "--seed", "1", "--train-out", s(&train), "--test-out", s(&test),
    ]));
    let summary: Value = serde_json::from_str(&out).unwrap();
    let sha = summary["sha256"].as_str().unwrap().to_owned();
    Fixture { dir, model, train, test, sha }
}

fn fixture() -> &'static Fixture {
    static F: std::sync::OnceLock<Fixture> = std::sync::OnceLock::new();
    F.get_or_init(|| train_fixture(TempDir::new().unwrap(), "model.bin"))
}

#[test]
fn training_is_deterministic() {
    let f = fixture();
    let again = train_fixture(TempDir::new().unwrap(), "again.bin");
    assert_eq!(f.sha, again.sha);
    let log = std::fs::read_to_string(format!("{}.log.jsonl", f.model.display())).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["loss"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn missing_corpus_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = ippsm(&["train", "--corpus", "/definitely/not/here", "--out", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn score_is_deterministic_and_flags_alphabet_errors() {
    let f = fixture();
    let a = ok(&ippsm(&["score", "--model", s(&f.model), "--json", "password1"]));
    let b = ok(&ippsm(&["score", "--model", s(&f.model), "--json", "password1"]));
    assert_eq!(a, b);
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["characters"].as_array().unwrap().len(), 9);

    let bad = ippsm(&["score", "--model", s(&f.model), "--json", "pass\u{00e9}"]);
    assert_eq!(bad.status.code(), Some(5));
    let v: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(v["character"], "\u{00e9}");
}

#[test]
fn batch_scoring_keeps_input_order() {
    let f = fixture();
    let mut child = Command::new(env!("CARGO_BIN_EXE_ippsm"))
        .args(["score", "--model", s(&f.model), "--json"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all("zebra\n\u{00fc}ber\nabc123\n".as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let pw: Vec<&str> = lines.iter().map(|v| v["password"].as_str().unwrap()).collect();
    assert_eq!(pw, ["zebra", "\u{00fc}ber", "abc123"]);
    assert!(lines[1]["error"].is_string());
}

#[test]
fn suggest_reports_ranking() {
    let f = fixture();
    let out = ok(&ippsm(&["suggest", "--model", s(&f.model), "--position", "2", "-k", "4", "monkey"]));
    let v: Value = serde_json::from_str(&out).unwrap();
    let ranking = v["ranking"].as_array().unwrap();
    let qs: Vec<f64> = ranking.iter().map(|r| r["q"].as_f64().unwrap()).collect();
    assert!(qs.windows(2).all(|w| w[0] >= w[1]));
    let q = v["q"].as_f64().unwrap();
    for c in v["suggestions"].as_array().unwrap() {
        let entry = ranking.iter().find(|r| r["character"] == *c).unwrap();
        assert!(entry["q"].as_f64().unwrap() < q);
    }
}

#[test]
fn perturbation_experiment_is_reproducible() {
    let f = fixture();
    let run = |name: &str| {
        let csv = f.dir.path().join(name);
        ok(&ippsm(&[
            "perturb", "--model", s(&f.model), "--train", s(&f.train), "--test", s(&f.test), "--weak", "40",
            "--samples", "2000", "--n", "1,2", "--seed", "11", "--out", s(&csv),
        ]));
        std::fs::read_to_string(csv).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("mode,n,agi,pnp,ratio,seed"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn single_perturbation_changes_n_positions() {
    let f = fixture();
    let out = ok(&ippsm(&[
        "perturb", "--model", s(&f.model), "--password", "sunshine", "--mode", "fully", "--n", "3",
    ]));
    let v: Value = serde_json::from_str(&out).unwrap();
    let (a, b) = (v["original"].as_str().unwrap(), v["perturbed"].as_str().unwrap());
    assert_eq!(a.chars().zip(b.chars()).filter(|(x, y)| x != y).count(), 3);
}

#[test]
fn evaluate_self_ranks_is_one_and_flat_ranks_exit_6() {
    let f = fixture();
    let out = ok(&ippsm(&["evaluate", "--model", s(&f.model), "--test", s(&f.test), "--self-ranks"]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["ws"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let flat = f.dir.path().join("flat.txt");
    std::fs::write(&flat, "4 aaaaa\n4 bbbbb\n4 ccccc\n").unwrap();
    let out = ippsm(&["evaluate", "--model", s(&f.model), "--test", s(&flat)]);
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn small_preset_records_its_layers() {
    let f = fixture();
    let corpus = f.dir.path().join("corpus.txt");
    let model = f.dir.path().join("small.bin");
    let out = ok(&ippsm(&[
        "train", "--corpus", s(&corpus), "--out", s(&model), "--preset", "small", "--epochs", "1",
        "--steps-per-epoch", "1", "--batch-size", "4",
    ]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["preset"], "small");
    // Layer list straight from the file's JSON header.
    let bytes = std::fs::read(&model).unwrap();
    let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let meta: Value = serde_json::from_slice(&bytes[10..10 + len]).unwrap();
    let a = meta["config"]["alphabet_size"].as_u64().unwrap();
    let rb = serde_json::json!({"kind": "residual-bottleneck", "filters": 128, "kernel": 3, "outer_kernel": 1});
    let mut expected = vec![serde_json::json!({"kind": "conv1d-same", "filters": 128, "kernel": 3, "stride": 1, "activation": "linear"})];
    expected.extend(std::iter::repeat_n(rb.clone(), 6));
    expected.push(serde_json::json!({"kind": "flatten"}));
    expected.push(serde_json::json!({"kind": "dense", "units": 128, "activation": "linear"}));
    expected.push(serde_json::json!({"kind": "dense", "units": 16 * 128, "activation": "linear"}));
    expected.push(serde_json::json!({"kind": "reshape", "shape": [16, 128]}));
    expected.extend(std::iter::repeat_n(rb, 6));
    expected.push(serde_json::json!({"kind": "flatten"}));
    expected.push(serde_json::json!({"kind": "dense", "units": 16 * a, "activation": "linear"}));
    assert_eq!(meta["layers"], Value::Array(expected));
}
