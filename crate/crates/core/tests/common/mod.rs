#![allow(dead_code)]

use std::path::Path;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use monopix::autograd::Tensor;
use monopix::data::io::encode_png;
use monopix::model::ImageBatch;
use monopix::training::{Checkpoint, TrainConfig, TrainState};
use tower::ServiceExt;

/// Untrained toy checkpoint.
pub fn write_checkpoint(dir: &Path, seed: u64) {
    let cfg = TrainConfig::preset("toy", seed).unwrap();
    let state = TrainState::new(&cfg).unwrap();
    Checkpoint::from_state(&state, &cfg, "toy").save(dir).unwrap();
}

pub fn pattern_png(size: usize) -> Vec<u8> {
    let t = Tensor::from_fn([1, 3, size, size], |[_, c, h, w]| ((c * 31 + h * 7 + w * 3) % 255) as f32 / 127.5 - 1.0);
    encode_png(&ImageBatch::new(t).unwrap(), 0).unwrap()
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

pub async fn post_json(app: &Router, uri: &str, v: serde_json::Value) -> (StatusCode, serde_json::Value) {
    let (s, b) = call(app, "POST", uri, serde_json::to_vec(&v).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap())
}

/// Small bidirectional config and data that train in well under a second per step.
pub fn small_setup(seed: u64) -> (TrainConfig, monopix::data::SyntheticPair) {
    let mut cfg = TrainConfig::preset("toy", seed).unwrap();
    cfg.generator.base_channels = 4;
    cfg.generator.depth = 2;
    cfg.discriminator.base_channels = 4;
    let data = monopix::data::synth_generate(&monopix::data::DomainPairSpec::brightness(0.3, 1.0, 32, 12, seed)).unwrap();
    (cfg, data)
}

/// Trains `steps` steps from scratch and returns the loss CSV text.
pub fn run_fresh(dir: &Path, seed: u64, steps: u64) -> String {
    let (cfg, data) = small_setup(seed);
    let mut state = TrainState::new(&cfg).unwrap();
    let log = dir.join("loss.csv");
    let opts = monopix::training::RunOptions {
        steps: Some(steps),
        log_path: Some(log.clone()),
        checkpoint_dir: Some(dir.join("ckpt")),
        model_id: "small".into(),
        ..Default::default()
    };
    monopix::training::train(&mut state, &cfg, &data.train_x, &data.train_y, &opts, |_| {}).unwrap();
    std::fs::read_to_string(log).unwrap()
}

/// Trains `first` steps, reloads the checkpoint, and continues to `total`.
pub fn run_resumed(dir: &Path, seed: u64, first: u64, total: u64) -> String {
    let (cfg, data) = small_setup(seed);
    let log = dir.join("loss.csv");
    let ckpt = dir.join("ckpt");
    let opts = |steps| monopix::training::RunOptions {
        steps: Some(steps),
        log_path: Some(log.clone()),
        checkpoint_dir: Some(ckpt.clone()),
        model_id: "small".into(),
        ..Default::default()
    };
    let mut state = TrainState::new(&cfg).unwrap();
    monopix::training::train(&mut state, &cfg, &data.train_x, &data.train_y, &opts(first), |_| {}).unwrap();
    drop(state);
    let (mut state, saved) = TrainState::load(&ckpt).unwrap();
    assert_eq!(saved, cfg);
    monopix::training::train(&mut state, &saved, &data.train_x, &data.train_y, &opts(total), |_| {}).unwrap();
    std::fs::read_to_string(log).unwrap()
}

pub fn params_bytes(dir: &Path) -> Vec<u8> {
    std::fs::read(dir.join("ckpt").join("params.bin")).unwrap()
}
