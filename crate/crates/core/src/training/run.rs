use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::step::{train_step, StepReport, TrainState};
use super::{Ablation, TrainConfig};
use crate::data::{augment, Dataset, DomainPairSpec};
use crate::error::{Error, Result};
use crate::losses::{DirectionTerms, LossBreakdown};

/// A training run as written in a config file. `train` is merged over the
/// preset-derived [`TrainConfig`] key by key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    #[serde(default)]
    pub seed: u64,
    /// Total optimization steps; defaults to `epochs` passes over domain X.
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default)]
    pub ablation: Option<Ablation>,
    #[serde(default)]
    pub train: serde_json::Value,
    pub data: DomainPairSpec,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
}

fn default_model_id() -> String {
    "monopix".into()
}

fn merge(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) if !o.is_null() => *b = o.clone(),
        _ => {}
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Preset, then ablation, then explicit overrides.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::preset(&self.preset, self.seed)?;
        if let Some(a) = self.ablation {
            cfg.weights = a.apply(cfg.weights);
        }
        let mut value = serde_json::to_value(&cfg)?;
        merge(&mut value, &self.train);
        let cfg: TrainConfig =
            serde_json::from_value(value).map_err(|e| Error::config(format!("train overrides: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Train until the state reaches this step count.
    pub steps: Option<u64>,
    pub log_path: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: Option<u64>,
    pub model_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: u64,
    pub epoch: usize,
    pub final_g: f64,
    pub final_d: f64,
}

const HEADER: [&str; 23] = [
    "step", "epoch", "lr", "g_total", "d_total", "g_adv_xy", "g_cyc_xy", "g_mono_xy", "g_df_xy", "delta_tar_xy",
    "delta_src_xy", "g_adv_yx", "g_cyc_yx", "g_mono_yx", "g_df_yx", "delta_tar_yx", "delta_src_yx", "d_adv_xy",
    "d_mono_xy", "d_df_xy", "d_adv_yx", "d_mono_yx",
    "d_df_yx",
];

fn row(r: &StepReport) -> Vec<String> {
    let dir = |b: &LossBreakdown, yx: bool| if yx { b.yx.unwrap_or_default() } else { b.xy };
    let g = |t: DirectionTerms| [t.adv, t.cyc, t.mono, t.df, t.delta_tar, t.delta_src];
    let mut v = vec![r.step.to_string(), r.epoch.to_string(), r.lr.to_string(), r.g.total.to_string(), r.d.total.to_string()];
    for yx in [false, true] {
        v.extend(g(dir(&r.g, yx)).iter().map(f64::to_string));
    }
    let (dxy, dyx) = (dir(&r.d, false), dir(&r.d, true));
    v.extend([dxy.adv, dxy.mono, dxy.df, dyx.adv, dyx.mono, dyx.df].iter().map(f64::to_string));
    v
}

/// Steps until `opts.steps` (or `cfg.epochs` passes over `x`), logging each
/// step to CSV and checkpointing on schedule. Appends to an existing log.
pub fn train(
    state: &mut TrainState,
    cfg: &TrainConfig,
    x: &dyn Dataset,
    y: &dyn Dataset,
    opts: &RunOptions,
    mut on_step: impl FnMut(&StepReport),
) -> Result<RunSummary> {
    cfg.validate()?;
    let per_epoch = (x.len() / cfg.batch_size).max(1) as u64;
    let target = opts.steps.unwrap_or(cfg.epochs as u64 * per_epoch);
    let mut log = match &opts.log_path {
        Some(p) => {
            let fresh = !p.exists();
            let file = OpenOptions::new().create(true).append(true).open(p)?;
            let mut w = csv::Writer::from_writer(file);
            if fresh {
                w.write_record(HEADER).map_err(csv_err)?;
            }
            Some(w)
        }
        None => None,
    };
    let mut last = None;
    while state.step < target {
        let (ix, iy) = state.next_indices(x.len(), y.len(), cfg.batch_size)?;
        let mut bx = x.batch(&ix)?;
        let mut by = y.batch(&iy)?;
        if cfg.augment != Default::default() {
            bx = augment(&bx, cfg.augment, state.rng())?;
            by = augment(&by, cfg.augment, state.rng())?;
        }
        let report = train_step(state, cfg, &bx, &by)?;
        if let Some(w) = log.as_mut() {
            w.write_record(row(&report)).map_err(csv_err)?;
        }
        on_step(&report);
        if let (Some(dir), Some(every)) = (&opts.checkpoint_dir, opts.checkpoint_every) {
            if every > 0 && state.step % every == 0 {
                state.save(cfg, &opts.model_id, dir)?;
            }
        }
        last = Some(report);
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    if let Some(dir) = &opts.checkpoint_dir {
        state.save(cfg, &opts.model_id, dir)?;
    }
    let (final_g, final_d) = last.map_or((0.0, 0.0), |r| (r.g.total, r.d.total));
    Ok(RunSummary {
        steps: state.step,
        epoch: state.epoch,
        final_g,
        final_d,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
