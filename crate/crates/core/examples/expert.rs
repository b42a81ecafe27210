//! Few-shot expert: label paired items by exhaustive search, fit the
//! regressor, and compare its O(1) guess with the search result.
//!
//! ```text
//! cargo run --release --example expert -- <checkpoint_dir>
//! ```

use monopix::data::synth_paired;
use monopix::inference::{exhaustive_infer, expert_infer, train_expert, ExpertConfig, PairedSample, PsnrToReference};
use monopix::model::{ControlBounds, ImageBatch};
use monopix::training::load_networks;

fn main() -> monopix::Result<()> {
    let dir = std::env::args().nth(1).expect("usage: expert <checkpoint_dir>");
    let (_, nets) = load_networks(dir.as_ref())?;
    let items = |count, seed| -> monopix::Result<Vec<PairedSample>> {
        synth_paired(0.3, 1.0, (0.1, 0.9), 64, count, seed)?
            .into_iter()
            .map(|p| Ok(PairedSample { input: ImageBatch::new(p.source)?, reference: ImageBatch::new(p.reference)? }))
            .collect()
    };
    let train = items(20, 1)?;
    let (expert, labels) = train_expert(&nets.g_xy, &train, &PsnrToReference, ControlBounds::UNIT, &ExpertConfig::default())?;
    println!("labels: {labels:?}");
    for s in items(8, 2)? {
        let best = exhaustive_infer(&nets.g_xy, &s.input, Some(&s.reference), &PsnrToReference, 11, ControlBounds::UNIT)?;
        let (_, c) = expert_infer(&expert, &nets.g_xy, &s.input)?;
        println!("exhaustive {:.2}  expert {:.3}", best.result.c_star, c);
    }
    Ok(())
}
