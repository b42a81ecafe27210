//! Drives the HTTP API in-process against a pass-through model and a fresh
//! toy checkpoint.

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::Request;
use monopix::service::{encode_b64, router, Model, Registry, DEFAULT_MAX_BODY_BYTES};
use monopix::training::{Checkpoint, TrainConfig, TrainState};
use tower::ServiceExt;

#[tokio::main(flavor = "current_thread")]
async fn main() -> monopix::Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = TrainConfig::preset("toy", 0)?;
    Checkpoint::from_state(&TrainState::new(&cfg)?, &cfg, "toy").save(dir.path())?;
    let registry = Registry::from_dir(dir.path())?;
    registry.insert(Model::pass_through("identity"));
    let app = router(Arc::new(registry), DEFAULT_MAX_BODY_BYTES);

    let image = monopix::data::io::encode_png(
        &monopix::model::ImageBatch::new(monopix::autograd::Tensor::full([1, 3, 64, 64], -0.4))?,
        0,
    )?;
    let requests = [
        ("GET", "/v1/models", String::new()),
        (
            "POST",
            "/v1/translate",
            serde_json::json!({ "model": "toy", "image": encode_b64(&image), "control": { "recipe": { "kind": "horizontal_ramp", "v0": 0.0, "v1": 1.0 } } }).to_string(),
        ),
        (
            "POST",
            "/v1/search",
            serde_json::json!({ "model": "toy", "image": encode_b64(&image), "reference": encode_b64(&image), "strategy": { "kind": "ternary", "n": 5 } }).to_string(),
        ),
        (
            "POST",
            "/v1/translate",
            serde_json::json!({ "model": "toy", "image": encode_b64(&image), "control": { "recipe": { "kind": "constant", "v": 1.5 } } }).to_string(),
        ),
    ];
    for (method, uri, body) in requests {
        let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let mut v: serde_json::Value = serde_json::from_slice(&to_bytes(resp.into_body(), usize::MAX).await.unwrap())?;
        if let Some(img) = v.get_mut("image") {
            *img = format!("<{} base64 chars>", img.as_str().unwrap_or("").len()).into();
        }
        println!("{method} {uri} -> {status}\n{v:#}\n");
    }
    Ok(())
}
