//! End-to-end checks of the command-line front-end.

use std::path::Path;
use std::process::{Command, Output};

fn ergolift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergolift")).args(args).output().expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const QL_CONFIG: &str = r#"
algorithm = "ql"
participant = "1.79"
seed = 3
"#;

#[test]
fn config_error_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "participant = \"1.79\"\nmystery_knob = true\n");
    let out = ergolift(&["pretrain", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_knob"));
}

#[test]
fn unknown_participant_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, "participant = \"2.10\"\n");
    let out = ergolift(&["pretrain", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, QL_CONFIG);
    let out = ergolift(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        dir.path().join("nope.ckpt.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ql_protocol_produces_report_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, QL_CONFIG);

    let run = |out_dir: &Path| {
        let out = ergolift(&[
            "protocol",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a);
    run(&b);

    for name in ["report.csv", "report.txt", "manifest.json", "pretrained.ckpt.json", "finetuned.ckpt.json"] {
        assert!(a.join(name).exists(), "{name} missing");
    }
    let csv_a = std::fs::read(a.join("report.csv")).unwrap();
    let csv_b = std::fs::read(b.join("report.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "equal manifests must give byte-identical metric CSVs");

    let text = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(text.contains("Sim/Sim") && text.contains("Sim/Real") && text.contains("Real/Real"));
    let manifest = std::fs::read_to_string(a.join("manifest.json")).unwrap();
    let mb = std::fs::read_to_string(b.join("manifest.json")).unwrap();
    assert_eq!(manifest, mb);

    // Step logs are JSON lines.
    let steps = std::fs::read_to_string(a.join("pretrain_steps.jsonl")).unwrap();
    let first = steps.lines().next().unwrap();
    let v: serde_json::Value = serde_json::from_str(first).unwrap();
    assert!(v.get("reward").is_some() && v.get("state").is_some());
}

#[test]
fn skip_finetune_omits_real_real_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, QL_CONFIG);
    let out_dir = dir.path().join("run");
    let out = ergolift(&[
        "protocol",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--skip-finetune",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(text.contains("Sim/Sim") && text.contains("Sim/Real"));
    assert!(!text.contains("Real/Real"));

    // The report command re-renders from the stored phase data.
    let out = ergolift(&["report", "--run", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Sim/Real"));
}

#[test]
fn pretrain_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, QL_CONFIG);
    let out_dir = dir.path().join("run");
    let out = ergolift(&["pretrain", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let ckpt = out_dir.join("pretrained.ckpt.json");
    let out = ergolift(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("eval over 10 episodes"), "{stdout}");
    // A deterministic environment and greedy policy leave no spread.
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("eval_metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["steps"]["std"].as_f64().unwrap(), 0.0);
    assert_eq!(metrics["reward"]["std"].as_f64().unwrap(), 0.0);

    // Loading a tabular checkpoint as a network must fail cleanly.
    let out = ergolift(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--algorithm",
        "dqn",
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn env_seed_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    write(&cfg, QL_CONFIG);
    let out_dir = dir.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_ergolift"))
        .args(["pretrain", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .env("ERGOLIFT_SEED", "12")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 12"), "{manifest}");
}
