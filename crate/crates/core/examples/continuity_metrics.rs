//! Intensity trajectories and the AL/Rg/RL/Sm report for a checkpoint (or
//! an untrained toy model).

use monopix::data::{synth_generate, Dataset, DomainPairSpec};
use monopix::metrics::{default_intensities, EvalReport, PixelL2, Trajectory};
use monopix::model::ImageBatch;
use monopix::training::{load_networks, TrainConfig, TrainState};

fn main() -> monopix::Result<()> {
    let g = match std::env::args().nth(1) {
        Some(dir) => load_networks(dir.as_ref())?.1.g_xy,
        None => TrainState::new(&TrainConfig::preset("toy", 0)?)?.nets.g_xy,
    };
    let data = synth_generate(&DomainPairSpec::brightness(0.3, 1.0, 64, 40, 0))?;
    let trajs = (0..data.test_x.len())
        .map(|i| Trajectory::generate(&g, &ImageBatch::new(data.test_x.get(i)?)?, &default_intensities()))
        .collect::<monopix::Result<Vec<_>>>()?;
    let report = EvalReport::from_trajectories(&trajs, &PixelL2)?;
    print!("{}", report.to_csv()?);
    Ok(())
}
