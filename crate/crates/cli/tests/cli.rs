use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

fn weaklab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weaklab"))
        .args(args)
        .env_remove("WEAKLAB_EMBED_URL")
        .output()
        .expect("run weaklab")
}

fn ok(args: &[&str]) -> Output {
    let out = weaklab(args);
    assert!(
        out.status.success(),
        "weaklab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn config() -> String {
    fixture().join("config.json").display().to_string()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn report_accuracy(out: &Path) -> f64 {
    let report: serde_json::Value = serde_json::from_slice(&read(&out.join("report.json"))).unwrap();
    report["accuracy"].as_f64().unwrap()
}

#[test]
fn end_to_end_fixture_reaches_accuracy() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    let c = config();
    for stage in ["expand", "pseudo-label", "train", "selftrain", "predict", "evaluate"] {
        ok(&["--config", &c, "--out", o, stage]);
    }
    let acc = report_accuracy(out.path());
    assert!(acc >= 0.9, "accuracy {acc}");
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&out.path().join("pseudo_label.manifest.json"))).unwrap();
    assert!((manifest["stats"]["epsilon"].as_f64().unwrap() - 3f64.ln()).abs() < 1e-12);
    assert_eq!(manifest["seed"], 0);
    assert!(manifest["inputs"]["vocabulary.json"].is_string());
    let trace = String::from_utf8(read(&out.path().join("selftrain_loss.csv"))).unwrap();
    assert!(trace.starts_with("portion_index,kl_loss_before,kl_loss_after\n"));
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let c = config();
    for dir in [&a, &b] {
        ok(&["--config", &c, "--out", dir.path().to_str().unwrap(), "run"]);
    }
    for name in [
        "vocabulary.json",
        "pseudo_labels.jsonl",
        "residual.jsonl",
        "model.json",
        "model_selftrained.json",
        "selftrain_loss.csv",
        "predictions.jsonl",
        "report.json",
        "expand.manifest.json",
        "evaluate.manifest.json",
    ] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name} differs");
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let c = config();
    ok(&["--config", &c, "--out", a.path().to_str().unwrap(), "expand"]);
    ok(&["--config", &c, "--out", b.path().to_str().unwrap(), "--seed", "7", "expand"]);
    assert_ne!(
        read(&a.path().join("expand.manifest.json")),
        read(&b.path().join("expand.manifest.json"))
    );
}

#[test]
fn missing_label_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"corpus": "corpus.jsonl", "labels": "no_such_labels.txt", "seed": 1}"#,
    )
    .unwrap();
    let out = weaklab(&["--config", cfg.to_str().unwrap(), "expand"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no_such_labels.txt"), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unreachable_provider_is_an_external_error_without_output() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let out_dir = tempfile::tempdir().unwrap();
    let target = out_dir.path().join("run");
    let out = weaklab(&[
        "--config",
        &config(),
        "--out",
        target.to_str().unwrap(),
        "--provider",
        &format!("http://127.0.0.1:{port}"),
        "expand",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!target.exists());
}

#[test]
fn provider_env_var_is_honoured() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let out_dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_weaklab"))
        .args(["--config", &config(), "--out", out_dir.path().to_str().unwrap(), "expand"])
        .env("WEAKLAB_EMBED_URL", format!("http://127.0.0.1:{port}"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_override_is_an_input_error() {
    let out = weaklab(&["--config", &config(), "--lambda", "1.5", "expand"]);
    assert_eq!(out.status.code(), Some(2));
    let out = weaklab(&["--config", &config(), "--strategy-pri", "median", "merge", "--input", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_gold_as_predictions_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<String> = std::fs::read_to_string(fixture().join("labels.txt"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    let mut preds = String::new();
    for line in std::fs::read_to_string(fixture().join("test.jsonl")).unwrap().lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        let ids: Vec<usize> = rec["labels"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| labels.iter().position(|n| n == l.as_str().unwrap()).unwrap())
            .collect();
        preds.push_str(&serde_json::json!({"id": rec["id"], "labels": ids}).to_string());
        preds.push('\n');
    }
    let pred_path = dir.path().join("gold_predictions.jsonl");
    std::fs::write(&pred_path, preds).unwrap();
    ok(&[
        "--config",
        &config(),
        "--out",
        dir.path().to_str().unwrap(),
        "evaluate",
        "--input",
        pred_path.to_str().unwrap(),
    ]);
    assert_eq!(report_accuracy(dir.path()), 1.0);
    let text = String::from_utf8(read(&dir.path().join("report.txt"))).unwrap();
    assert!(text.contains("macro_f1"));
}

#[test]
fn merging_one_predictor_returns_it_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("a.jsonl");
    let body = "{\"id\":\"1\",\"types\":[0,3],\"priority\":\"High\"}\n{\"id\":\"2\",\"types\":[],\"priority\":\"Low\"}\n";
    std::fs::write(&input, body).unwrap();
    for (it, pri) in [("union", "highest"), ("intersection", "average"), ("union", "lowest")] {
        let out = dir.path().join(format!("{it}-{pri}"));
        ok(&[
            "--out",
            out.to_str().unwrap(),
            "--strategy-it",
            it,
            "--strategy-pri",
            pri,
            "merge",
            "--input",
            input.to_str().unwrap(),
        ]);
        assert_eq!(read(&out.join("merged.jsonl")), body.as_bytes());
    }
}

#[test]
fn merging_two_predictors() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    std::fs::write(&a, "{\"id\":\"1\",\"types\":[0,1],\"priority\":\"Critical\"}\n").unwrap();
    std::fs::write(&b, "{\"id\":\"1\",\"types\":[1,2],\"priority\":\"Medium\"}\n").unwrap();
    let out = dir.path().join("out");
    ok(&[
        "--out",
        out.to_str().unwrap(),
        "--strategy-it",
        "intersection",
        "--strategy-pri",
        "average",
        "merge",
        "--input",
        a.to_str().unwrap(),
        "--input",
        b.to_str().unwrap(),
    ]);
    assert_eq!(
        String::from_utf8(read(&out.join("merged.jsonl"))).unwrap(),
        "{\"id\":\"1\",\"types\":[1],\"priority\":\"Critical\"}\n"
    );
}

#[test]
fn shipped_fixture_matches_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--dir", dir.path().to_str().unwrap()]);
    for name in ["labels.txt", "unlabelled.jsonl", "test.jsonl", "config.json"] {
        assert_eq!(read(&dir.path().join(name)), read(&fixture().join(name)), "{name}");
    }
}
