//! Trains the toy brightness model and evaluates it on held-out images.
//!
//! ```text
//! cargo run --release --example train_toy -- [steps] [out_dir] [epsilon]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use monopix::data::{synth_generate, DomainPairSpec};
use monopix::experiments::{evaluate_toy, ToyEvalConfig};
use monopix::training::{train, RunOptions, TrainConfig, TrainState};

fn main() -> monopix::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(2000, |s| s.parse().expect("steps"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/toy".into()));
    let mut cfg = TrainConfig::preset("toy", 0)?;
    if let Some(eps) = args.next() {
        cfg.weights.epsilon = eps.parse().expect("epsilon");
    }

    let data = synth_generate(&DomainPairSpec::brightness(0.3, 1.0, 64, 200, 0))?;
    let mut state = TrainState::new(&cfg)?;
    std::fs::create_dir_all(&out)?;
    let opts = RunOptions {
        steps: Some(steps),
        log_path: Some(out.join("loss.csv")),
        checkpoint_dir: Some(out.clone()),
        checkpoint_every: Some(500),
        model_id: "toy".into(),
    };
    let start = Instant::now();
    train(&mut state, &cfg, &data.train_x, &data.train_y, &opts, |r| {
        if r.step % 100 == 0 {
            println!(
                "step {:>5}  g {:.3}  d {:.3}  delta_tar {:+.3}  {:.0}s",
                r.step,
                r.g.total,
                r.d.total,
                r.g.xy.delta_tar,
                start.elapsed().as_secs_f64()
            );
        }
    })?;

    let report = evaluate_toy(&state.nets.g_xy, &state.nets.d_y, &data.test_x, (0.3, 1.0), &ToyEvalConfig::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
