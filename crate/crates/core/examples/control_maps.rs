//! Builds each kind of control map and writes them as 16-bit grayscale PNGs.

use image::{ImageBuffer, Luma};
use monopix::inference::{control_from_png, make_control_map, ControlRecipe};
use monopix::model::ControlBounds;

fn main() -> monopix::Result<()> {
    let (h, w) = (64, 64);
    let disc: Vec<Vec<f32>> = (0..h)
        .map(|y| (0..w).map(|x| if (x as f32 - 32.0).hypot(y as f32 - 32.0) < 16.0 { 1.0 } else { 0.0 }).collect())
        .collect();
    let recipes = [
        ("constant", ControlRecipe::Constant { v: 0.5 }),
        ("horizontal_ramp", ControlRecipe::HorizontalRamp { v0: 0.0, v1: 1.0 }),
        ("vertical_ramp", ControlRecipe::VerticalRamp { v0: 1.0, v1: 0.0 }),
        ("mask_blend", ControlRecipe::MaskBlend { mask: disc, v_in: 0.9, v_out: 0.1 }),
    ];
    let out = std::path::Path::new("runs/control_maps");
    std::fs::create_dir_all(out)?;
    for (name, recipe) in &recipes {
        let map = make_control_map(recipe, h, w, ControlBounds::UNIT)?;
        let data = map.tensor().data();
        let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([(data[y as usize * w + x as usize] * 65535.0).round() as u16]));
        let path = out.join(format!("{name}.png"));
        img.save(&path).map_err(|e| monopix::Error::Image { path: Some(path.clone()), message: e.to_string() })?;
        let back = control_from_png(&std::fs::read(&path)?, ControlBounds::UNIT)?;
        println!("{name:<16} -> {} (max round-trip error {:.1e})", path.display(), back.tensor().max_abs_diff(map.tensor()));
    }

    match make_control_map(&ControlRecipe::Constant { v: 1.5 }, h, w, ControlBounds::UNIT) {
        Err(e) => println!("1.5 with default bounds: {e}"),
        Ok(_) => unreachable!(),
    }
    make_control_map(&ControlRecipe::Constant { v: 1.5 }, h, w, ControlBounds::OUT_OF_BOUND)?;
    println!("1.5 accepted once out-of-bound inference is enabled");
    Ok(())
}
