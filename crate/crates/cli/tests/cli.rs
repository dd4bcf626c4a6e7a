use std::path::Path;
use std::process::{Command, Output};

fn artic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artic"))
        .args(args)
        .output()
        .unwrap()
}

fn code(args: &[&str]) -> i32 {
    artic(args).status.code().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

/// Small corpus plus factors in `dir`.
fn small_corpus(dir: &Path) {
    let d = dir.to_str().unwrap();
    let gen = [
        "gen",
        "--p",
        "10",
        "--t",
        "240",
        "--gestures",
        "5",
        "--window",
        "5",
        "--seed",
        "1",
        "--out",
        d,
    ];
    assert_eq!(code(&gen), 0);
    assert_eq!(code(&["factors", &p(dir, "contours.csf"), "--out", d]), 0);
}

fn small_train(dir: &Path, extra: &[&str]) -> Output {
    let scores = p(dir, "scores.csv");
    let mut args = vec![
        "train",
        &scores,
        "--gestures",
        "5",
        "--window",
        "5",
        "--updates",
        "15",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    artic(&args)
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    let help = String::from_utf8(artic(&["train", "--help"]).stdout).unwrap();
    assert!(help.contains("update,loss,mse,sparsity,lr"));
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(code(&[]), 3);
    assert_eq!(code(&["frobnicate"]), 3);
    assert_eq!(code(&["gen", "--bogus"]), 3);
    assert_eq!(code(&["gen", "--seed", "minus-one"]), 3);
}

#[test]
fn short_sequence_is_an_argument_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(
        code(&["gen", "--t", "40", "--window", "21", "--out", out]),
        3
    );
}

#[test]
fn missing_input_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(
        code(&["factors", &p(tmp.path(), "nope.csf"), "--out", out]),
        1
    );
    assert_eq!(
        code(&["train", &p(tmp.path(), "nope.csv"), "--out", out]),
        1
    );
}

#[test]
fn malformed_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    std::fs::write(tmp.path().join("bad.csf"), "not a contour file\n").unwrap();
    assert_eq!(
        code(&["factors", &p(tmp.path(), "bad.csf"), "--out", out]),
        2
    );
    std::fs::write(tmp.path().join("bad.csv"), "g1,g2\n1,oops\n").unwrap();
    assert_eq!(
        code(&["plot", "--scores", &p(tmp.path(), "bad.csv"), "--out", out]),
        2
    );
    std::fs::write(tmp.path().join("neg.csv"), "g1,g2\n1,-1\n").unwrap();
    assert_eq!(
        code(&["plot", "--scores", &p(tmp.path(), "neg.csv"), "--out", out]),
        2
    );
}

#[test]
fn foreign_factor_support_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    let text = std::fs::read_to_string(dir.join("factors.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    // Vertex 0 belongs to the jaw; give the larynx factor weight there.
    doc["factors"][0][4] = serde_json::json!(0.5);
    std::fs::write(dir.join("tampered.json"), doc.to_string()).unwrap();
    let out = dir.join("check");
    let args = [
        "factors",
        &p(dir, "contours.csf"),
        "--factors-in",
        &p(dir, "tampered.json"),
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(code(&args), 2);
    let args = [
        "factors",
        &p(dir, "contours.csf"),
        "--factors-in",
        &p(dir, "factors.json"),
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(code(&args), 0);
    assert_eq!(
        std::fs::read(dir.join("scores.csv")).unwrap(),
        std::fs::read(out.join("scores.csv")).unwrap()
    );
}

#[test]
fn per_without_targets_is_an_argument_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    assert!(small_train(dir, &[]).status.success());
    let args = [
        "eval",
        "--checkpoint",
        &p(dir, "checkpoint.json"),
        "--scores",
        &p(dir, "scores.csv"),
        "--per",
        "--out",
        dir.to_str().unwrap(),
    ];
    assert_eq!(code(&args), 3);
    assert_eq!(
        small_train(dir, &["--lambda2", "0.3"]).status.code(),
        Some(3)
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    std::fs::write(dir.join("cfg.json"), r#"{"updates": 7, "lambda1": 0.2}"#).unwrap();
    let cfg = p(dir, "cfg.json");
    assert!(small_train(dir, &["--config", &cfg]).status.success());
    let rows = std::fs::read_to_string(dir.join("trace.csv"))
        .unwrap()
        .lines()
        .count();
    // The flag's 15 updates win over the file's 7.
    assert_eq!(rows, 16);
    std::fs::write(dir.join("cfg.json"), r#"{"updatez": 7}"#).unwrap();
    assert_eq!(small_train(dir, &["--config", &cfg]).status.code(), Some(3));
}

#[test]
fn fine_tune_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let d = dir.to_str().unwrap();
    small_corpus(dir);
    let truth = p(dir, "truth.json");
    let factors = p(dir, "factors.json");
    let out = small_train(
        dir,
        &[
            "--lambda2",
            "0.3",
            "--truth",
            &truth,
            "--factors",
            &factors,
            "--segment",
            "120",
            "--hop",
            "60",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ck: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("checkpoint.json")).unwrap())
            .unwrap();
    assert_eq!(ck["D"], 5);
    assert_eq!(ck["K"], 5);
    assert!(ck["head"].is_object());
    assert_eq!(ck["factors"].as_array().unwrap().len(), 20);

    let eval = [
        "eval",
        "--checkpoint",
        &p(dir, "checkpoint.json"),
        "--scores",
        &p(dir, "scores.csv"),
        "--truth",
        &truth,
        "--utterance",
        "80",
        "--test-utterances",
        "1",
        "--head-updates",
        "20",
        "--out",
        d,
    ];
    assert_eq!(code(&eval), 0);
    let report = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("feature,n_speakers,per,range,model_variance,sparsity")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "gestural_scores");
    assert!(row[2].parse::<f64>().unwrap() >= 0.0);
    assert!((0.0..=1.0).contains(&row[5].parse::<f64>().unwrap()));

    let plot = [
        "plot",
        "--scores",
        &p(dir, "gestural_scores.csv"),
        "--checkpoint",
        &p(dir, "checkpoint.json"),
        "--out",
        d,
    ];
    assert_eq!(code(&plot), 0);
    let first = std::fs::read(dir.join("heatmap.svg")).unwrap();
    assert_eq!(code(&plot), 0);
    assert_eq!(first, std::fs::read(dir.join("heatmap.svg")).unwrap());
    assert!(std::fs::read_to_string(dir.join("gestures.svg"))
        .unwrap()
        .contains("id=\"gesture5\""));
}

#[test]
fn plot_needs_factors_for_gestures() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    assert!(small_train(dir, &[]).status.success());
    assert_eq!(
        code(&[
            "plot",
            "--checkpoint",
            &p(dir, "checkpoint.json"),
            "--out",
            dir.to_str().unwrap()
        ]),
        2
    );
    assert_eq!(code(&["plot", "--out", dir.to_str().unwrap()]), 3);
}

#[test]
fn per_table_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("t.csv"),
        "feature,model,1,2,3,4,5,6,7,8\nwavlm,base,27.2,25.2,24.1,20.5,18.3,17.9,14.2,13.0\nwavlm,large,20.2,19.2,17.1,16.5,16.3,14.9,13.2,12.1\n",
    )
    .unwrap();
    assert_eq!(
        code(&[
            "eval",
            "--per-table",
            &p(dir, "t.csv"),
            "--out",
            dir.to_str().unwrap()
        ]),
        0
    );
    let report = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(
        report.contains("wavlm/large,8,12.1000,8.1000,20.601"),
        "{report}"
    );
    std::fs::write(dir.join("u.csv"), "feature,model,1,2\nx,huge,1,2\n").unwrap();
    assert_eq!(
        code(&[
            "eval",
            "--per-table",
            &p(dir, "u.csv"),
            "--out",
            dir.to_str().unwrap()
        ]),
        2
    );
}
