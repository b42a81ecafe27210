//! Ternary search against exhaustive grid search, first on a known function
//! and then on a model checkpoint when one is given.
//!
//! ```text
//! cargo run --release --example ternary_search -- [checkpoint_dir]
//! ```

use monopix::data::synth_paired;
use monopix::inference::{exhaustive_infer, exhaustive_search, ternary_infer, ternary_search, PsnrToReference, TraceStep};
use monopix::model::{ControlBounds, ImageBatch};
use monopix::training::load_networks;

fn main() -> monopix::Result<()> {
    let f = |c: f64| Ok(-(c - 0.37) * (c - 0.37));
    let t = ternary_search(f, 0.0, 1.0, 7)?;
    for step in &t.trace {
        if let TraceStep::Ternary { low, high, c1, f1, c2, f2 } = step {
            println!("[{low:.4}, {high:.4}]  f({c1:.4}) = {f1:.5}  f({c2:.4}) = {f2:.5}");
        }
    }
    let e = exhaustive_search(f, 0.0, 1.0, 11)?;
    println!("ternary c* = {:.4} ({} evals), exhaustive c* = {:.4} ({} evals)", t.c_star, t.evaluations, e.c_star, e.evaluations);

    let Some(dir) = std::env::args().nth(1) else { return Ok(()) };
    let (_, nets) = load_networks(dir.as_ref())?;
    for item in synth_paired(0.3, 1.0, (0.2, 0.8), 64, 5, 7)? {
        let x = ImageBatch::new(item.source)?;
        let r = ImageBatch::new(item.reference)?;
        let ex = exhaustive_infer(&nets.g_xy, &x, Some(&r), &PsnrToReference, 11, ControlBounds::UNIT)?;
        let te = ternary_infer(&nets.g_xy, &x, Some(&r), &PsnrToReference, 7, ControlBounds::UNIT)?;
        println!(
            "t = {:.2}: exhaustive c* {:.2} ({:.2} dB), ternary c* {:.3} ({:.2} dB)",
            item.t, ex.result.c_star, ex.result.score, te.result.c_star, te.result.score
        );
    }
    Ok(())
}
