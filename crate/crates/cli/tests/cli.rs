use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: [&str; 10] = ["--epochs", "4", "--warmup-epochs", "1", "--embed-dim", "10", "--feature-maps", "4", "--batch-size", "8"];

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy.csv")
}

fn netab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netab")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = netab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(out: &Path, extra: &[&str]) -> serde_json::Value {
    let toy = toy();
    let mut args = vec!["train", "--train", s(&toy), "--test", s(&toy), "--out", s(out)];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    serde_json::from_str(ok(&args).trim()).unwrap()
}

#[test]
fn train_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let line = train(&a, &["--noise-rate", "0.2"]);
    train(&b, &["--noise-rate", "0.2"]);
    for f in ["manifest.json", "model.ckpt", "history.csv", "history.json", "metrics.json"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    assert_eq!(std::fs::read(a.join("history.csv")).unwrap(), std::fs::read(b.join("history.csv")).unwrap());
    assert!(line["accuracy"].as_f64().unwrap() >= 0.0);
    assert_eq!(line["method"], "netab");

    let eval: serde_json::Value = serde_json::from_str(ok(&["evaluate", "--checkpoint", s(&a.join("model.ckpt")), "--test", s(&toy())]).trim()).unwrap();
    assert_eq!(eval["test_examples"], 40);
}

#[test]
fn evaluate_reproduces_train_metrics_on_the_same_test_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let toy = toy();
    let line = train(&out, &["--val", s(&toy), "--method", "cnn"]);
    let eval: serde_json::Value = serde_json::from_str(ok(&["evaluate", "--checkpoint", s(&out.join("model.ckpt")), "--test", s(&toy)]).trim()).unwrap();
    for k in ["accuracy", "f1_pos", "f1_neg", "test_examples"] {
        assert_eq!(line[k], eval[k], "{k}");
    }
}

#[test]
fn bad_inputs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy();
    let out = netab(&["train", "--train", s(&toy), "--test", s(&toy), "--out", s(&dir.path().join("x")), "--noise-rate", "0.6"]);
    assert_eq!(out.status.code(), Some(2));
    let out = netab(&["sweep", "--corpus", s(&toy), "--rates", "0,0.7", "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = netab(&["train", "--train", s(&toy), "--test", s(&toy), "--out", s(&dir.path().join("z")), "--batch-size", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let ckpt = dir.path().join("broken.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    assert_eq!(netab(&["evaluate", "--checkpoint", s(&ckpt), "--test", s(&toy)]).status.code(), Some(2));
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    train(&out, &[]);
    let path = out.join("model.ckpt");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(netab(&["evaluate", "--checkpoint", s(&path), "--test", s(&toy())]).status.code(), Some(2));
}

fn sweep(out: &Path, workers: &str) {
    let toy = toy();
    let mut args = vec!["sweep", "--corpus", s(&toy), "--rates", "0,0.5", "--seeds", "1", "--workers", workers, "--out", s(out)];
    args.extend_from_slice(&SMALL);
    ok(&args);
}

#[test]
fn sweep_rows_and_worker_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let (one, four) = (dir.path().join("one"), dir.path().join("four"));
    sweep(&one, "1");
    sweep(&four, "4");
    let csv = std::fs::read_to_string(one.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "noise_rate,seed,method,accuracy,f1_pos,f1_neg,wall_time");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("0,1,cnn,") && rows[1].starts_with("0,1,netab,") && rows[3].starts_with("0.5,1,netab,"));
    for f in ["results.csv", "results.json"] {
        assert_eq!(std::fs::read(one.join(f)).unwrap(), std::fs::read(four.join(f)).unwrap(), "{f}");
    }
}

fn corrupt(input: &Path, out: &Path, rate: &str, seed: &str) -> serde_json::Value {
    serde_json::from_str(ok(&["corrupt", "--in", s(input), "--out", s(out), "--rate", rate, "--seed", seed]).trim()).unwrap()
}

#[test]
fn corrupt_flips_exact_fraction_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let hundred = dir.path().join("hundred.csv");
    let mut text = String::from("label,text\n");
    for i in 0..100 {
        text.push_str(&format!("{},sentence number {i}\n", i % 2));
    }
    std::fs::write(&hundred, text).unwrap();

    let zero = corrupt(&hundred, &dir.path().join("zero.csv"), "0", "1");
    assert_eq!(zero["flipped"], 0);
    let a = corrupt(&hundred, &dir.path().join("a.csv"), "0.3", "5");
    corrupt(&hundred, &dir.path().join("b.csv"), "0.3", "5");
    assert_eq!(a["flipped"], 30);
    let (fa, fb) = (std::fs::read(dir.path().join("a.csv")).unwrap(), std::fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(fa, fb);
    let flagged = String::from_utf8(fa).unwrap().lines().skip(1).filter(|l| l.ends_with(",true")).count();
    assert_eq!(flagged, 30);
    assert!(dir.path().join("a.csv.manifest.json").exists());
}

#[test]
fn replay_reproduces_train_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (first, again) = (dir.path().join("first"), dir.path().join("again"));
    train(&first, &["--noise-rate", "0.1", "--seed", "4"]);
    ok(&["replay", "--manifest", s(&first.join("manifest.json")), "--out", s(&again)]);
    for f in ["history.csv", "history.json", "metrics.json", "model.ckpt"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn replay_refuses_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("toy.csv");
    std::fs::copy(toy(), &corpus).unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--train", s(&corpus), "--test", s(&corpus), "--out", s(&out)];
    args.extend_from_slice(&SMALL);
    ok(&args);
    std::fs::write(&corpus, "label,text\n1,changed\n0,also changed\n").unwrap();
    assert_eq!(netab(&["replay", "--manifest", s(&out.join("manifest.json"))]).status.code(), Some(2));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "dropout_rate = 0.25\nlr = 0.02 # overridden below\n").unwrap();
    let out = dir.path().join("run");
    train(&out, &["--config", s(&conf), "--lr", "0.03"]);
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 5);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["run"]["settings"]["lr"], 0.03);
    assert_eq!(manifest["run"]["settings"]["dropout_rate"], 0.25);
}
