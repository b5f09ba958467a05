use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dac::error::exit;

fn dac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dac")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--set", "data.n_per_class=40",
    "--set", "train.epochs=6",
    "--set", "train.warmup=2",
    "--set", "train.hidden=8",
    "--set", "train.anneal_epochs=4",
    "--set", "train.lr=0.05",
    "--set", "train.batch_size=32",
];

fn generate(dir: &Path, name: &str, split: &str, kind: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut args = vec!["generate", "--split", split, "--kind", kind, "--fraction", "0.1", "--seed", "1", "--out", p(&path)];
    args.extend_from_slice(SMALL);
    let out = dac(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn generate_writes_sidecar_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.bin", "train", "smudge");
    let b = generate(dir.path(), "b.bin", "train", "smudge");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.bin.json")).unwrap()).unwrap();
    assert_eq!(sidecar["fraction"], 0.1);
    assert_eq!(sidecar["noise_kind"], "smudge");
    assert_eq!(sidecar["structured"], 16);
    let val = generate(dir.path(), "v.bin", "val", "none");
    assert_ne!(fs::read(&a).unwrap(), fs::read(val).unwrap());
}

#[test]
fn usage_errors_have_their_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dac(&["generate", "--kind", "blur", "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&out), exit::USAGE);
    let out = dac(&["generate", "--set", "train.nonsense=1", "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&out), exit::USAGE);
    let train = generate(dir.path(), "t.bin", "train", "smudge");
    let out = dac(&["train", "--train", p(&train), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), exit::USAGE, "missing val");
    let out = dac(&["clean", "--train", p(&train), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), exit::USAGE, "missing val");
    let out = dac(&["sweep", "--train", p(&train), "--val", p(&train), "--alphas", "", "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), exit::USAGE, "empty alphas");
}

#[test]
fn io_and_format_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let out = dac(&["train", "--train", p(&missing), "--val", p(&missing), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), exit::IO);
    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"DACD\x02\x00rest").unwrap();
    let out = dac(&["train", "--train", p(&junk), "--val", p(&junk), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), exit::FORMAT);
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 2"));
}

#[test]
fn train_eval_and_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let train = generate(dir.path(), "t.bin", "train", "smudge");
    let val = generate(dir.path(), "v.bin", "val", "none");
    let out_dir = dir.path().join("run");
    let mut args = vec!["train", "--train", p(&train), "--val", p(&val), "--out", p(&out_dir), "--seed", "1"];
    args.extend_from_slice(SMALL);
    let out = dac(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("stats.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,loss,gamma,val_acc,alpha,lr");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].ends_with(",null,0.05"));
    let resolved = fs::read_to_string(out_dir.join("config.resolved")).unwrap();
    assert!(resolved.contains("train.epochs = 6"));
    assert!(resolved.contains(&format!("data.val = {}", p(&val))));

    let eval_dir = dir.path().join("eval");
    let out = dac(&["eval", "--checkpoint", p(&out_dir.join("best.ckpt")), "--data", p(&train), "--out", p(&eval_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("eval.json")).unwrap()).unwrap();
    assert!(report["abstention_pr"]["recall"].is_number());
    assert!(report["accuracy_renormalized"].is_number());
    let curve = fs::read_to_string(eval_dir.join("risk_coverage.csv")).unwrap();
    assert_eq!(curve.lines().count(), 102);

    let other = dir.path().join("k5.bin");
    let out = dac(&["generate", "--set", "data.k=5", "--set", "data.d=3", "--set", "data.n_per_class=5", "--out", p(&other)]);
    assert_eq!(code(&out), 0);
    let out = dac(&["eval", "--checkpoint", p(&out_dir.join("best.ckpt")), "--data", p(&other), "--out", p(&eval_dir)]);
    assert_eq!(code(&out), exit::DIMENSION);
}

#[test]
fn huge_fixed_alpha_never_abstains() {
    let dir = tempfile::tempdir().unwrap();
    let train = generate(dir.path(), "t.bin", "train", "smudge");
    let val = generate(dir.path(), "v.bin", "val", "none");
    let out_dir = dir.path().join("run");
    let mut args = vec!["train", "--train", p(&train), "--val", p(&val), "--out", p(&out_dir), "--fixed-alpha", "1e6"];
    args.extend_from_slice(SMALL);
    let out = dac(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("stats.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(2), Some("0"), "{line}");
    }
}

#[test]
fn clean_and_sweep_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let train = generate(dir.path(), "t.bin", "train", "uniform");
    let val = generate(dir.path(), "v.bin", "val", "none");
    let clean_dir = dir.path().join("clean");
    let mut args = vec!["clean", "--train", p(&train), "--val", p(&val), "--elimination", "misclassified", "--out", p(&clean_dir)];
    args.extend_from_slice(SMALL);
    let out = dac(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(clean_dir.join("report.json")).unwrap()).unwrap();
    assert!(report["eliminated_fraction"].is_number());
    assert!(report["removed_residual"].as_str().unwrap().contains('/'));
    assert_eq!(report["elimination_rule"], "misclassified");

    let sweep_dir = dir.path().join("sweep");
    let mut args = vec!["sweep", "--train", p(&train), "--val", p(&val), "--alphas", "0.5", "--threads", "2", "--out", p(&sweep_dir)];
    args.extend_from_slice(SMALL);
    let out = dac(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<_> = fs::read_dir(&sweep_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("sweep_"))
        .collect();
    assert_eq!(files.len(), 1);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sweep_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 1);
}
