mod common;

use std::path::Path;
use std::process::{Command, Output};

use monopix::data::io::read_png;

fn monopix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monopix"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_config(dir: &Path, preset: &str, steps: u64) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "preset": preset,
        "steps": steps,
        "data": { "task": { "kind": "brightness", "x_gain": 0.3, "y_gain": 1.0 }, "image_size": 32, "count": 4, "seed": 0 },
        "out_dir": dir.join("run"),
    });
    let path = dir.join("run.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn dry_run_prints_resolved_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), "yosemite_preset.json", 1);
    let out = monopix(&["train", "--config", s(&cfg), "--dry-run"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lambda_cyc=10 lambda_mn=1 lambda_df=0.25 epsilon=0.5"), "{text}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn unknown_preset_fails_with_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), "nope", 1);
    let out = monopix(&["train", "--config", s(&cfg), "--dry-run"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("nope"));
}

#[test]
fn train_then_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), "toy", 2);
    assert!(monopix(&["train", "--config", s(&cfg)]).status.success());
    let out = monopix(&["train", "--config", s(&cfg), "--resume", "--steps", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("run/loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn infer_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    common::write_checkpoint(&ckpt, 0);
    let images = dir.path().join("images");
    std::fs::create_dir_all(&images).unwrap();
    for i in 0..3 {
        std::fs::write(images.join(format!("{i}.png")), common::pattern_png(64)).unwrap();
    }
    let out_png = dir.path().join("out.png");
    let out = monopix(&["infer", "--checkpoint", s(&ckpt), "--image", s(&images.join("0.png")), "--control", "0.0", "--out", s(&out_png)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_png(&out_png).unwrap().shape(), [1, 3, 64, 64]);

    let out = monopix(&["infer", "--checkpoint", s(&ckpt), "--image", s(&images.join("0.png")), "--control", "1.5", "--out", s(&out_png)]);
    assert!(!out.status.success());

    let out = monopix(&["eval", "--checkpoint", s(&ckpt), "--dataset", s(&images)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "image,AL,Rg,RL,Sm");
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn missing_checkpoint_is_an_error() {
    let out = monopix(&["infer", "--checkpoint", "/nonexistent", "--image", "x.png", "--control", "0.5", "--out", "y.png"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}
