//! Runs the `textcf` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn textcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textcf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn textcf")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn grad_check_passes() {
    for encoder in ["gru", "average"] {
        let o = textcf(&["grad-check", "--encoder", encoder]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let out = stdout(&o);
        assert!(out.contains("word_embeddings") && out.contains("max relative error"));
        assert!(!out.contains("FAIL"));
    }
}

#[test]
fn out_of_range_lambda_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = textcf(&["train", "--data", p(dir.path()), "--out", p(&run), "--lambda", "1.5"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("lambda must be in [0, 1]"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let o = textcf(&["train", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(code(&textcf(&[])), 1);
    assert_eq!(code(&textcf(&["--help"])), 0);
}

#[test]
fn version_names_checkpoint_format() {
    let o = textcf(&["--version"]);
    assert_eq!(code(&o), 0);
    let v = stdout(&o);
    assert!(v.contains(env!("CARGO_PKG_VERSION")) && v.contains("CRK1 v1"), "{v}");
}

#[test]
fn missing_bundle_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = textcf(&["evaluate", "--run", p(&dir.path().join("nothing"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn prepare_train_evaluate_recommend_saliency() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");

    let o = textcf(&["prepare", "--synthetic", "--out", p(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(data.join("bundle.bin").exists() && data.join("vocab.tsv").exists());
    let bundle_before = std::fs::read(data.join("bundle.bin")).unwrap();

    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"encoder": {"word_dim": 8, "hidden1": 6, "hidden2": 5}, "batch_users": 32, "max_updates": 500}"#)
        .unwrap();
    let train = |out: &Path| {
        textcf(&[
            "train", "--threads", "1", "--data", p(&data), "--out", p(out), "--config", p(&config),
            "--fold-mode", "cold", "--fold", "1", "--encoder", "gru", "--mtl", "on", "--lambda", "0.5",
            "--max-updates", "40", "--eval-every", "20", "--seed", "3",
        ])
    };
    let o = train(&run);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["run.json", "config.json", "report.json", "best.ckpt", "last.ckpt"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    // flag over file over default
    assert_eq!(manifest["config"]["max_updates"], 40);
    assert_eq!(manifest["config"]["batch_users"], 32);
    assert_eq!(manifest["config"]["encoder"]["word_dim"], 8);
    assert_eq!(manifest["config"]["patience"], 8);
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["data_sha256"].as_str().unwrap().len(), 64);

    // single-threaded reruns are bit-identical
    let again = dir.path().join("again");
    assert_eq!(code(&train(&again)), 0);
    assert_eq!(std::fs::read(run.join("best.ckpt")).unwrap(), std::fs::read(again.join("best.ckpt")).unwrap());

    let report = dir.path().join("report.json");
    let o = textcf(&["evaluate", "--run", p(&run), "--protocol", "cold", "--m", "10,20", "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["ms"], serde_json::json!([10, 20]));
    assert!(rep["evaluated"].as_u64().unwrap() > 0);

    let o = textcf(&["evaluate", "--run", p(&run), "--protocol", "tags", "--m", "1,2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = textcf(&["evaluate", "--run", p(&run), "--protocol", "warm"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("refused"));

    let o = textcf(&["recommend", "--run", p(&run), "--user", "0", "--top", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 6);

    let texts = dir.path().join("texts.txt");
    std::fs::write(&texts, "topic0word1 topic0word2 filler\ntopic1word3 topic1word4\n").unwrap();
    let o = textcf(&["recommend", "--run", p(&run), "--user", "0", "--item-text", p(&texts)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = textcf(&["saliency", "--run", p(&run), "--user", "1", "--item", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("position\ttoken\tscore\n"));
    let html = dir.path().join("map.html");
    let o = textcf(&["saliency", "--run", p(&run), "--user", "1", "--item-text", p(&texts), "--format", "html", "--out", p(&html)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(&html).unwrap().contains("<span"));

    let o = textcf(&["recommend", "--run", p(&run), "--user", "100000"]);
    assert_eq!(code(&o), 1);

    // resuming with a changed learning rate is recorded
    let resumed = dir.path().join("resumed");
    let o = textcf(&[
        "train", "--threads", "1", "--data", p(&data), "--out", p(&resumed), "--resume", p(&run),
        "--max-updates", "60", "--lr", "0.0005",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(resumed.join("report.json")).unwrap()).unwrap();
    assert!(r["overrides"].as_array().unwrap().contains(&serde_json::json!("adam.learning_rate")));
    assert_eq!(r["updates"], 60);

    assert_eq!(std::fs::read(data.join("bundle.bin")).unwrap(), bundle_before);
}
