mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use monopix::service::{decode_b64, encode_b64, router, Model, Registry, DEFAULT_MAX_BODY_BYTES};
use serde_json::json;

use common::{call, pattern_png, post_json, write_checkpoint};

fn app() -> (tempfile::TempDir, axum::Router) {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoint(&dir.path().join("toy"), 0);
    let reg = Registry::from_dir(dir.path()).unwrap();
    reg.insert(Model::pass_through("identity"));
    (dir, router(Arc::new(reg), DEFAULT_MAX_BODY_BYTES))
}

#[tokio::test]
async fn health_and_models() {
    let (_d, app) = app();
    let (s, body) = call(&app, "GET", "/v1/health", vec![]).await;
    assert_eq!(s, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["models"], 2);
    let (_, body) = call(&app, "GET", "/v1/models", vec![]).await;
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let ids: Vec<&str> = v["models"].as_array().unwrap().iter().map(|m| m["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["identity", "toy"]);
}

#[tokio::test]
async fn pass_through_round_trip_is_bit_exact() {
    let (_d, app) = app();
    let png = pattern_png(32);
    let (s, v) = post_json(
        &app,
        "/v1/translate",
        json!({ "model": "identity", "image": encode_b64(&png), "control": { "recipe": { "kind": "constant", "v": 0.5 } } }),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(decode_b64(v["image"].as_str().unwrap()).unwrap(), png);
    assert_eq!(v["bounds"], json!({ "min": 0.0, "max": 1.0 }));
}

#[tokio::test]
async fn error_statuses() {
    let (_d, app) = app();
    let img = encode_b64(&pattern_png(64));
    let constant = |v: f64| json!({ "recipe": { "kind": "constant", "v": v } });

    let (s, _) = post_json(&app, "/v1/translate", json!({ "model": "nope", "image": img, "control": constant(0.5) })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = call(&app, "POST", "/v1/translate", b"{not json".to_vec()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v) = post_json(&app, "/v1/translate", json!({ "model": "toy", "image": img, "control": constant(1.5) })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["kind"], "out_of_bounds");

    let (s, v) = post_json(
        &app,
        "/v1/translate",
        json!({ "model": "toy", "image": img, "control": constant(1.5), "oob_allowed": true }),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["bounds"], json!({ "min": -1.0, "max": 2.0 }));

    let small = router(Arc::new(Registry::new()), 1024);
    let (s, _) = call(&small, "POST", "/v1/translate", vec![b' '; 4096]).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn search_and_trajectory() {
    let (_d, app) = app();
    let img = encode_b64(&pattern_png(64));
    let (s, v) = post_json(
        &app,
        "/v1/search",
        json!({ "model": "toy", "image": img, "reference": img, "strategy": { "kind": "ternary", "n": 7 } }),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["result"]["trace"].as_array().unwrap().len(), 7);

    let (s, _) = post_json(&app, "/v1/search", json!({ "model": "toy", "image": img, "strategy": { "kind": "ternary", "n": 7 } })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v) = post_json(&app, "/v1/search", json!({ "model": "toy", "image": img, "strategy": { "kind": "expert" } })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");

    let (s, v) = post_json(&app, "/v1/trajectory", json!({ "model": "toy", "image": img, "n": 11 })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["images"].as_array().unwrap().len(), 11);
    let cs: Vec<f64> = v["intensities"].as_array().unwrap().iter().map(|c| c.as_f64().unwrap()).collect();
    assert_eq!(cs.len(), 11);
    for (i, c) in cs.iter().enumerate() {
        assert!((c - i as f64 / 10.0).abs() < 1e-6);
    }
}
