//! Request handling shared by the CLI and the HTTP server, plus the model
//! registry.

mod http;
mod registry;

pub use http::{router, serve, ServiceConfig, DEFAULT_MAX_BODY_BYTES};
pub use registry::{Direction, Model, ModelInfo, Registry};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::data::io::{decode_png, encode_png};
use crate::error::{Error, Result};
use crate::inference::{
    control_from_json, control_from_png, criterion, expert_infer, exhaustive_infer, make_control_map, ternary_infer,
    translate_constant, ControlRecipe, SearchResult,
};
use crate::metrics::evenly_spaced;
use crate::model::{ControlBounds, ControlMap, ImageBatch};

/// Where the control map comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSource {
    Recipe(ControlRecipe),
    /// Base64 8- or 16-bit grayscale PNG.
    Png(String),
    /// Rows of values.
    Values(Vec<Vec<f32>>),
}

/// Bounds in force for a request.
pub fn active_bounds(oob_allowed: bool) -> ControlBounds {
    if oob_allowed {
        ControlBounds::OUT_OF_BOUND
    } else {
        ControlBounds::UNIT
    }
}

pub fn resolve_control(source: &ControlSource, h: usize, w: usize, bounds: ControlBounds) -> Result<ControlMap> {
    let map = match source {
        ControlSource::Recipe(r) => make_control_map(r, h, w, bounds)?,
        ControlSource::Png(b64) => control_from_png(&decode_b64(b64)?, bounds)?,
        ControlSource::Values(rows) => control_from_json(&serde_json::to_string(rows)?, bounds)?,
    };
    if map.shape() != [1, 1, h, w] {
        return Err(Error::shape(format!(
            "control map is {}x{}, image is {h}x{w}",
            map.shape()[2],
            map.shape()[3]
        )));
    }
    Ok(map)
}

pub fn decode_b64(s: &str) -> Result<Vec<u8>> {
    B64.decode(s.trim()).map_err(|e| Error::config(format!("invalid base64: {e}")))
}

pub fn encode_b64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

/// Decodes a PNG, translates it with `control` and re-encodes. The CLI
/// `infer` command and `POST /v1/translate` both end here.
pub fn translate_png(model: &Model, direction: Direction, image_png: &[u8], control: &ControlSource, oob_allowed: bool) -> Result<Vec<u8>> {
    let image = decode_png(image_png)?;
    let [_, _, h, w] = image.shape();
    let map = resolve_control(control, h, w, active_bounds(oob_allowed))?;
    let out = model.translator(direction)?.translate(&image, &map)?;
    encode_png(&out, 0)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateRequest {
    pub model: String,
    /// Base64 PNG.
    pub image: String,
    pub control: ControlSource,
    #[serde(default)]
    pub oob_allowed: bool,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub model: String,
    pub bounds: ControlBounds,
    pub image: String,
    pub elapsed_ms: f64,
}

pub fn handle_translate(registry: &Registry, req: &TranslateRequest) -> Result<TranslateResponse> {
    let start = std::time::Instant::now();
    let model = registry.get(&req.model)?;
    let png = translate_png(&model, req.direction, &decode_b64(&req.image)?, &req.control, req.oob_allowed)?;
    Ok(TranslateResponse {
        model: req.model.clone(),
        bounds: active_bounds(req.oob_allowed),
        image: encode_b64(&png),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Exhaustive { n: usize },
    Ternary { n: usize },
    Expert,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub model: String,
    pub image: String,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default = "default_criterion")]
    pub criterion: String,
    pub strategy: Strategy,
    #[serde(default)]
    pub bounds: Option<ControlBounds>,
    #[serde(default)]
    pub direction: Direction,
}

fn default_criterion() -> String {
    "psnr_to_reference".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchResponse {
    pub model: String,
    pub bounds: ControlBounds,
    pub c_star: f64,
    /// Absent for the expert strategy.
    pub result: Option<SearchResult>,
    pub image: String,
    pub elapsed_ms: f64,
}

pub fn handle_search(registry: &Registry, req: &SearchRequest) -> Result<SearchResponse> {
    let start = std::time::Instant::now();
    let model = registry.get(&req.model)?;
    let bounds = match req.bounds {
        Some(b) => ControlBounds::new(b.min, b.max)?,
        None => ControlBounds::UNIT,
    };
    let image = decode_png(&decode_b64(&req.image)?)?;
    let g = model.translator(req.direction)?;
    let (c_star, result, out) = match req.strategy {
        Strategy::Expert => {
            let expert = model
                .expert()
                .ok_or_else(|| Error::Unsupported(format!("model {} has no expert", req.model)))?;
            let (out, c) = expert_infer(expert, g, &image)?;
            (c as f64, None, out)
        }
        Strategy::Exhaustive { n } | Strategy::Ternary { n } => {
            let crit = criterion(&req.criterion)?;
            let reference = req.reference.as_deref().map(|r| decode_png(&decode_b64(r)?)).transpose()?;
            if let Some(r) = &reference {
                if r.shape() != image.shape() {
                    return Err(Error::shape("reference and image differ in size"));
                }
            }
            let outcome = if matches!(req.strategy, Strategy::Exhaustive { .. }) {
                exhaustive_infer(g, &image, reference.as_ref(), crit.as_ref(), n, bounds)?
            } else {
                ternary_infer(g, &image, reference.as_ref(), crit.as_ref(), n, bounds)?
            };
            (outcome.result.c_star, Some(outcome.result), outcome.image)
        }
    };
    Ok(SearchResponse {
        model: req.model.clone(),
        bounds,
        c_star,
        result,
        image: encode_b64(&encode_png(&out, 0)?),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRequest {
    pub model: String,
    pub image: String,
    #[serde(default = "default_points")]
    pub n: usize,
    #[serde(default)]
    pub direction: Direction,
}

fn default_points() -> usize {
    11
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryResponse {
    pub model: String,
    pub bounds: ControlBounds,
    pub intensities: Vec<f32>,
    pub images: Vec<String>,
    pub elapsed_ms: f64,
}

/// Translations at `n` evenly spaced intensities in `[0, 1]`.
pub fn trajectory_pngs(model: &Model, direction: Direction, image: &ImageBatch, n: usize) -> Result<(Vec<f32>, Vec<Vec<u8>>)> {
    if n < 2 {
        return Err(Error::config("a trajectory needs at least two points"));
    }
    let g = model.translator(direction)?;
    let cs = evenly_spaced(0.0, 1.0, n);
    let pngs = cs
        .iter()
        .map(|&c| encode_png(&translate_constant(g, image, c, ControlBounds::UNIT)?, 0))
        .collect::<Result<Vec<_>>>()?;
    Ok((cs, pngs))
}

pub fn handle_trajectory(registry: &Registry, req: &TrajectoryRequest) -> Result<TrajectoryResponse> {
    let start = std::time::Instant::now();
    let model = registry.get(&req.model)?;
    let image = decode_png(&decode_b64(&req.image)?)?;
    let (intensities, pngs) = trajectory_pngs(&model, req.direction, &image, req.n)?;
    Ok(TrajectoryResponse {
        model: req.model.clone(),
        bounds: ControlBounds::UNIT,
        intensities,
        images: pngs.iter().map(|p| encode_b64(p)).collect(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
