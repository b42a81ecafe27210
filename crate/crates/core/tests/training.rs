mod common;

use common::{params_bytes, run_fresh, run_resumed, small_setup};
use monopix::training::{load_networks, train_step, TrainState};
use monopix::Error;

#[test]
fn fixed_seed_runs_are_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let la = run_fresh(a.path(), 3, 6);
    let lb = run_fresh(b.path(), 3, 6);
    assert_eq!(la.lines().count(), 7);
    assert_eq!(la, lb);
    assert_eq!(params_bytes(a.path()), params_bytes(b.path()));
}

#[test]
fn different_seeds_differ() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_ne!(run_fresh(a.path(), 3, 2), run_fresh(b.path(), 4, 2));
}

#[test]
fn resume_matches_uninterrupted() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let straight = run_fresh(a.path(), 5, 6);
    let resumed = run_resumed(b.path(), 5, 3, 6);
    assert_eq!(straight, resumed);
    assert_eq!(params_bytes(a.path()), params_bytes(b.path()));
}

#[test]
fn checkpoint_metadata_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    run_fresh(dir.path(), 1, 2);
    let (meta, nets) = load_networks(&dir.path().join("ckpt")).unwrap();
    assert_eq!(meta.step, 2);
    assert_eq!(meta.preset_name, "toy");
    assert!(nets.is_bidirectional());
}

#[test]
fn corrupt_checkpoint_is_a_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    run_fresh(dir.path(), 1, 1);
    let ckpt = dir.path().join("ckpt");
    let p = ckpt.join("params.bin");
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_networks(&ckpt), Err(Error::Checkpoint(_))));
    let meta = std::fs::read_to_string(ckpt.join("meta.json")).unwrap();
    std::fs::write(ckpt.join("meta.json"), meta.replace("\"schema_version\": 1", "\"schema_version\": 99")).unwrap();
    assert!(matches!(TrainState::load(&ckpt), Err(Error::Checkpoint(_))));
}

#[test]
fn step_reports_every_term() {
    let (cfg, data) = small_setup(7);
    let mut state = TrainState::new(&cfg).unwrap();
    let x = data.train_x.items()[0].clone();
    let y = data.train_y.items()[0].clone();
    let bx = monopix::model::ImageBatch::new(monopix::autograd::Tensor::stack_batch(&[&x, &x])).unwrap();
    let by = monopix::model::ImageBatch::new(monopix::autograd::Tensor::stack_batch(&[&y, &y])).unwrap();
    let r = train_step(&mut state, &cfg, &bx, &by).unwrap();
    assert_eq!((r.step, state.step), (0, 1));
    assert!(r.g.total.is_finite() && r.d.total.is_finite());
    let yx = r.g.yx.unwrap();
    assert!(yx.cyc > 0.0 && r.g.xy.cyc > 0.0);
}
