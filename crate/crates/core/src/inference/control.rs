use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::model::{ControlBounds, ControlMap};

/// Named ways to build a control map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlRecipe {
    Constant { v: f32 },
    /// Left column `v0`, right column `v1`.
    HorizontalRamp { v0: f32, v1: f32 },
    /// Top row `v0`, bottom row `v1`.
    VerticalRamp { v0: f32, v1: f32 },
    /// `m * v_in + (1 - m) * v_out` with `mask` rows of weights in `[0, 1]`.
    MaskBlend { mask: Vec<Vec<f32>>, v_in: f32, v_out: f32 },
    /// Explicit rows of values.
    Painted { values: Vec<Vec<f32>> },
}

fn ramp(i: usize, n: usize, v0: f32, v1: f32) -> f32 {
    if n < 2 {
        return v0;
    }
    let t = i as f64 / (n - 1) as f64;
    (v0 as f64 + t * (v1 as f64 - v0 as f64)) as f32
}

fn check_rows(rows: &[Vec<f32>], h: usize, w: usize, what: &str) -> Result<()> {
    if rows.len() != h || rows.iter().any(|r| r.len() != w) {
        return Err(Error::shape(format!("{what} must be {h}x{w}")));
    }
    Ok(())
}

/// Builds a single-item `(1, 1, h, w)` map; every value must lie in `bounds`.
pub fn make_control_map(recipe: &ControlRecipe, h: usize, w: usize, bounds: ControlBounds) -> Result<ControlMap> {
    if h == 0 || w == 0 {
        return Err(Error::shape("control map must be non-empty"));
    }
    let t = match recipe {
        ControlRecipe::Constant { v } => Tensor::full([1, 1, h, w], *v),
        ControlRecipe::HorizontalRamp { v0, v1 } => Tensor::from_fn([1, 1, h, w], |[_, _, _, x]| ramp(x, w, *v0, *v1)),
        ControlRecipe::VerticalRamp { v0, v1 } => Tensor::from_fn([1, 1, h, w], |[_, _, y, _]| ramp(y, h, *v0, *v1)),
        ControlRecipe::MaskBlend { mask, v_in, v_out } => {
            check_rows(mask, h, w, "mask")?;
            if mask.iter().flatten().any(|m| !(0.0..=1.0).contains(m)) {
                return Err(Error::range("mask weights must lie in [0, 1]"));
            }
            Tensor::from_fn([1, 1, h, w], |[_, _, y, x]| {
                let m = mask[y][x];
                if m == 1.0 {
                    *v_in
                } else if m == 0.0 {
                    *v_out
                } else {
                    m * v_in + (1.0 - m) * v_out
                }
            })
        }
        ControlRecipe::Painted { values } => {
            check_rows(values, h, w, "painted map")?;
            Tensor::from_fn([1, 1, h, w], |[_, _, y, x]| values[y][x])
        }
    };
    ControlMap::new(t, bounds)
}

/// Decodes an 8- or 16-bit grayscale PNG, mapping 0 to `bounds.min` and
/// full scale to `bounds.max`.
pub fn control_from_png(bytes: &[u8], bounds: ControlBounds) -> Result<ControlMap> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| Error::Image {
        path: None,
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (values, full): (Vec<f64>, f64) = match img {
        DynamicImage::ImageLuma8(g) => (g.into_raw().into_iter().map(f64::from).collect(), 255.0),
        DynamicImage::ImageLuma16(g) => (g.into_raw().into_iter().map(f64::from).collect(), 65535.0),
        other => {
            return Err(Error::Image {
                path: None,
                message: format!("control map must be 8- or 16-bit grayscale, got {:?}", other.color()),
            })
        }
    };
    let (lo, hi) = (bounds.min as f64, bounds.max as f64);
    let data = values.into_iter().map(|v| (lo + v / full * (hi - lo)) as f32).collect();
    ControlMap::new(Tensor::from_vec([1, 1, h, w], data), bounds)
}

/// Parses a JSON array of rows.
pub fn control_from_json(text: &str, bounds: ControlBounds) -> Result<ControlMap> {
    let rows: Vec<Vec<f32>> = serde_json::from_str(text)?;
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    make_control_map(&ControlRecipe::Painted { values: rows }, h, w, bounds)
}
