//! Evaluates every term of the generator and discriminator objectives on a
//! freshly initialised desk-scale model.

use monopix::data::{synth_generate, DomainPairSpec};
use monopix::losses::{hinge_margin_loss, preset, total_discriminator_loss, total_generator_loss, ContrastivePair, LossContext, Reduction, TranslationSide};
use monopix::autograd::Tensor;
use monopix::training::{TrainConfig, TrainState};

fn main() -> monopix::Result<()> {
    for d in [0.7, 0.0, -0.5] {
        let delta = Tensor::<f32>::full([1, 1, 4, 4], d);
        println!("hinge(delta={d}, eps=0.5) = {}", hinge_margin_loss(&delta, 0.5, Reduction::Mean));
    }

    let p = preset("yosemite")?;
    println!("yosemite weights: {:?}", p.weights);

    let cfg = TrainConfig::preset("toy", 0)?;
    let state = TrainState::new(&cfg)?;
    let data = synth_generate(&DomainPairSpec::brightness(0.3, 1.0, 64, 4, 0))?;
    let (x, y) = (&data.train_x.items()[0], &data.train_y.items()[0]);
    let pair = ContrastivePair::new(vec![0.2], vec![0.8])?;
    let ctx = LossContext {
        nets: &state.nets,
        xy: TranslationSide { source: x, target_real: y, pair: &pair },
        yx: Some(TranslationSide { source: y, target_real: x, pair: &pair }),
        weights: cfg.weights,
    };
    println!("generator:     {:#?}", total_generator_loss(&ctx)?);
    println!("discriminator: {:#?}", total_discriminator_loss(&ctx)?);
    Ok(())
}
