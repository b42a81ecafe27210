//! Fréchet distance on the built-in channel-statistics embedding and on
//! raw 1-D samples.

use monopix::data::{synth_generate, DomainPairSpec};
use monopix::metrics::{frechet_distance, ChannelStats, Embedding};
use monopix::model::ImageBatch;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> monopix::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let n = Normal::new(0.0, 1.0).unwrap();
    let a: Vec<Vec<f64>> = (0..100_000).map(|_| vec![n.sample(&mut rng)]).collect();
    let b: Vec<Vec<f64>> = (0..100_000).map(|_| vec![n.sample(&mut rng) + 1.0]).collect();
    println!("N(0,1) vs N(1,1): {:.4} (analytic 1)", frechet_distance(&a, &b)?.fid);

    let data = synth_generate(&DomainPairSpec::brightness(0.3, 1.0, 32, 200, 0))?;
    let embed = |set: &monopix::data::InMemory| {
        set.items().iter().map(|t| ChannelStats.embed(&ImageBatch::new(t.clone())?)).collect::<monopix::Result<Vec<_>>>()
    };
    let (x, y) = (embed(&data.train_x)?, embed(&data.train_y)?);
    println!("dark vs dark:   {:.4}", frechet_distance(&x, &x)?.fid);
    println!("dark vs bright: {:.4}", frechet_distance(&x, &y)?.fid);
    Ok(())
}
