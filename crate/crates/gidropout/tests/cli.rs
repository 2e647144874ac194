//! End-to-end checks of the command-line surface: subcommands, file
//! outputs, and the documented exit codes (0 success, 2 config error,
//! 3 divergence).

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gidropout"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fixture() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy.tsv")
}

fn synth_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "--out",
        dir.path().to_str().unwrap(),
        "--train-n",
        "220",
        "--test-n",
        "60",
    ]);
    assert!(out.status.success(), "synth failed: {out:?}");
    dir
}

fn write_spec(dir: &Path, body: &str) -> String {
    let path = dir.join("spec.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn micro_spec(dir: &Path, extra: &str) -> String {
    write_spec(
        dir,
        &format!(
            r#"{{
  "data": {{"train": "{t}/train.tsv", "test": "{t}/test.tsv", "dev_fraction": 0.2}},
  "model": {{"kind": "cnn", "embed_dim": 10, "filters_per_width": 3}},
  "train": {{"max_epochs": 3, "patience": 10}},
  "seeds": [1]{extra}
}}"#,
            t = dir.display()
        ),
    )
}

#[test]
fn synth_is_deterministic_and_balanced() {
    let a = synth_dir();
    let b = synth_dir();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read_to_string(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "train.tsv"), read(&b, "train.tsv"));
    assert_eq!(read(&a, "test.tsv"), read(&b, "test.tsv"));
    assert_eq!(read(&a, "train.tsv").lines().count(), 220);
}

#[test]
fn score_emits_sorted_table() {
    let out = run(&["score", "--data", fixture(), "--beta", "0.36787944117"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("good\t"), "highest probability first: {first}");
    // word, two class scores, max, prob
    assert_eq!(first.split('\t').count(), 5);
    let probs: Vec<f64> = text
        .lines()
        .map(|l| l.rsplit('\t').next().unwrap().parse().unwrap())
        .collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]), "sorted by prob desc");
}

#[test]
fn keywords_lists_top_words_per_class() {
    let out = run(&["keywords", "--data", fixture(), "--beta", "0.36787944117", "--k", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("pos\t1\tgood\t"), "got: {text}");
    assert!(text.lines().count() >= 3, "header + one row per class");
}

#[test]
fn zipf_reports_json_fit() {
    let dir = synth_dir();
    let out = run(&[
        "zipf",
        "--data",
        dir.path().join("train.tsv").to_str().unwrap(),
        "--beta",
        "1e-20",
    ]);
    assert!(out.status.success(), "{out:?}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["slope"].as_f64().unwrap() < 0.0);
    let r2 = v["r_squared"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&r2));
}

#[test]
fn zipf_insufficient_support_is_config_free_failure() {
    // toy fixture has one positive-probability word only
    let out = run(&["zipf", "--data", fixture(), "--beta", "0.5"]);
    assert!(!out.status.success());
}

#[test]
fn train_writes_report_checkpoint_and_eval_reads_them() {
    let dir = synth_dir();
    let spec = micro_spec(dir.path(), r#", "policy": {"mode": "table", "beta": 1e-20}"#);
    let out_dir = dir.path().join("run");
    let out = run(&[
        "train",
        "--config",
        &spec,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "train failed: {out:?}");
    for f in ["report.json", "epochs.tsv", "model.bin"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["seed"], 1);
    assert!(report["table_fingerprint"].is_string());
    assert!(report["best_dev_accuracy"].as_f64().unwrap() <= 1.0);

    let eval = run(&[
        "eval",
        "--model",
        out_dir.join("model.bin").to_str().unwrap(),
        "--data",
        dir.path().join("test.tsv").to_str().unwrap(),
    ]);
    assert!(eval.status.success(), "{eval:?}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&eval)).unwrap();
    assert_eq!(v["examples"], 60);
    let acc = v["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn train_seed_flag_overrides_spec() {
    let dir = synth_dir();
    let spec = micro_spec(dir.path(), "");
    let out_dir = dir.path().join("run2");
    let out = run(&[
        "train",
        "--config",
        &spec,
        "--seed",
        "77",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["seed"], 77);
}

#[test]
fn compare_and_sweep_and_ablate_run_end_to_end() {
    let dir = synth_dir();
    let spec = micro_spec(
        dir.path(),
        r#", "policy": {"mode": "table", "beta": 1e-20},
  "p_grid": [0.2], "beta_grid": [1e-20], "ablation_ks": [0, 5]"#,
    );
    for (cmd, file) in [
        ("compare", "compare.json"),
        ("sweep-beta", "sweep.json"),
        ("ablate", "ablate.json"),
    ] {
        let out_dir = dir.path().join(cmd);
        let out = run(&[cmd, "--config", &spec, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{cmd} failed: {out:?}");
        assert!(out_dir.join(file).exists());
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // malformed json
    let bad = write_spec(dir.path(), "{ not json");
    let out = run(&["train", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    // out-of-range grid value
    let dir2 = synth_dir();
    let spec = micro_spec(dir2.path(), r#", "beta_grid": [1.5]"#);
    let out = run(&["compare", "--config", &spec]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    // invalid beta on score
    let out = run(&["score", "--data", fixture(), "--beta", "1.0"]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    // unknown flag is a usage error (clap uses 2 as well)
    let out = run(&["score", "--nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("short.tsv");
    std::fs::write(
        &data,
        "pos\tgood fun\nneg\tbad movie\npos\tnice one\nneg\tawful thing\npos\tgreat fun\nneg\tbad thing\n",
    )
    .unwrap();
    let spec = write_spec(
        dir.path(),
        &format!(
            r#"{{
  "data": {{"train": "{d}", "test": "{d}", "dev_fraction": 0.34}},
  "model": {{"kind": "cnn", "embed_dim": 4, "filters_per_width": 2}},
  "train": {{"max_epochs": 3, "batch_size": 2,
             "adam": {{"learning_rate": 0.001, "beta1": 0.9, "beta2": 0.999, "epsilon": 0.0}}}},
  "seeds": [1]
}}"#,
            d = data.display()
        ),
    );
    let out = run(&["train", "--config", &spec]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("diverged"), "stderr: {stderr}");
}

#[test]
fn missing_data_file_fails_nonzero() {
    let out = run(&["score", "--data", "/nonexistent/x.tsv", "--beta", "0.5"]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(0));
}
