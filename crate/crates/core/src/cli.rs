//! Command-line entry points.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::data::{load_folder, synth_generate, Dataset, DomainTask, FolderOptions};
use crate::error::{Error, Result};
use crate::inference::{criterion, train_expert, ControlRecipe, ExpertConfig, PairedSample};
use crate::losses::preset;
use crate::metrics::{evenly_spaced, fid_harness, ChannelStats, EvalReport, FidMode, PixelL2, Trajectory};
use crate::model::{ControlBounds, ImageBatch};
use crate::service::{self, ControlSource, Direction, Model, Registry, ServiceConfig};
use crate::training::{load_networks, train, RunConfig, RunOptions, TrainState};

#[derive(Parser, Debug)]
#[command(name = "monopix", version, about = "Monotonic pixel-level image translation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DirectionArg {
    Xy,
    Yx,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Xy => Direction::Xy,
            DirectionArg::Yx => Direction::Yx,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dry_run: bool,
        /// Continue from the checkpoint in the config's out_dir.
        #[arg(long)]
        resume: bool,
        /// Override the step budget.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Write AL/Rg/RL/Sm (and optionally FID) for a folder of images.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated subset of al,rl,fid.
        #[arg(long, default_value = "al,rl")]
        metrics: String,
        /// Real target-domain images, needed for fid.
        #[arg(long)]
        real: Option<PathBuf>,
        #[arg(long, default_value_t = 11)]
        points: usize,
        #[arg(long)]
        image_size: Option<usize>,
        #[arg(long, value_enum, default_value = "xy")]
        direction: DirectionArg,
        /// Output prefix; writes PREFIX.csv and PREFIX.json. Prints CSV when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Translate one PNG.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// A number, a recipe JSON object, or a .png / .json control file.
        #[arg(long)]
        control: String,
        #[arg(long)]
        out: PathBuf,
        /// Widen the control bounds for out-of-bound inference.
        #[arg(long)]
        oob: bool,
        #[arg(long, value_enum, default_value = "xy")]
        direction: DirectionArg,
    },
    /// Fit an intensity expert on paired folders (matched by sorted file name).
    ExpertTrain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long, default_value = "psnr_to_reference")]
        criterion: String,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "xy")]
        direction: DirectionArg,
        /// Defaults to CHECKPOINT/expert.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "MONOPIX_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "MONOPIX_MODEL_DIR")]
        model_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = service::DEFAULT_MAX_BODY_BYTES)]
        max_body_bytes: usize,
    },
}

/// Parses the `--control` argument.
pub fn parse_control(arg: &str) -> Result<ControlSource> {
    let path = Path::new(arg);
    if path.is_file() {
        let bytes = std::fs::read(path)?;
        return match path.extension().and_then(|e| e.to_str()) {
            Some("png") => Ok(ControlSource::Png(service::encode_b64(&bytes))),
            _ => parse_control_json(std::str::from_utf8(&bytes).map_err(|e| Error::config(e.to_string()))?),
        };
    }
    if let Ok(v) = arg.trim().parse::<f32>() {
        return Ok(ControlSource::Recipe(ControlRecipe::Constant { v }));
    }
    parse_control_json(arg)
}

fn parse_control_json(text: &str) -> Result<ControlSource> {
    if let Ok(r) = serde_json::from_str::<ControlRecipe>(text) {
        return Ok(ControlSource::Recipe(r));
    }
    serde_json::from_str::<Vec<Vec<f32>>>(text)
        .map(ControlSource::Values)
        .map_err(|_| Error::config(format!("cannot read control {text:?}: expected a number, recipe, or rows")))
}

fn folder_images(dir: &Path, image_size: usize) -> Result<Vec<ImageBatch>> {
    let ds = load_folder(dir, &FolderOptions { image_size, strict: true })?;
    (0..ds.len()).map(|i| ImageBatch::new(ds.get(i)?)).collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, dry_run, resume, steps } => cmd_train(&config, dry_run, resume, steps),
        Command::Eval { checkpoint, dataset, metrics, real, points, image_size, direction, out } => {
            cmd_eval(&checkpoint, &dataset, &metrics, real.as_deref(), points, image_size, direction.into(), out.as_deref())
        }
        Command::Infer { checkpoint, image, control, out, oob, direction } => {
            let model = Model::load(&checkpoint, None)?;
            let png = service::translate_png(&model, direction.into(), &std::fs::read(&image)?, &parse_control(&control)?, oob)?;
            std::fs::write(&out, png)?;
            Ok(())
        }
        Command::ExpertTrain { checkpoint, inputs, references, criterion: crit, steps, seed, direction, out } => {
            let model = Model::load(&checkpoint, None)?;
            let size = preset(&model.info().preset)?.image_size;
            let xs = folder_images(&inputs, size)?;
            let rs = folder_images(&references, size)?;
            if xs.len() != rs.len() {
                return Err(Error::config(format!("{} inputs but {} references", xs.len(), rs.len())));
            }
            let items: Vec<PairedSample> =
                xs.into_iter().zip(rs).map(|(input, reference)| PairedSample { input, reference }).collect();
            let cfg = ExpertConfig { steps, seed, ..Default::default() };
            let crit = criterion(&crit)?;
            let (expert, labels) = train_expert(model.translator(direction.into())?, &items, crit.as_ref(), ControlBounds::UNIT, &cfg)?;
            let dir = out.unwrap_or_else(|| checkpoint.join("expert"));
            expert.save(&dir)?;
            println!("{}", serde_json::json!({ "expert": dir, "labels": labels }));
            Ok(())
        }
        Command::Serve { port, model_dir, host, max_body_bytes } => {
            let registry = Arc::new(Registry::from_dir(&model_dir)?);
            if registry.is_empty() {
                log::warn!("no checkpoints found under {}", model_dir.display());
            }
            let addr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Error::config(format!("bad address {host}:{port}: {e}")))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(registry, ServiceConfig { addr, max_body_bytes }))
        }
    }
}

fn cmd_train(config: &Path, dry_run: bool, resume: bool, steps: Option<u64>) -> Result<()> {
    let run_cfg = RunConfig::from_file(config)?;
    let mut cfg = run_cfg.resolve()?;
    if dry_run {
        let w = &cfg.weights;
        println!("lambda_cyc={} lambda_mn={} lambda_df={} epsilon={}", w.lambda_cyc, w.lambda_mn, w.lambda_df, w.epsilon);
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let mut state = if resume {
        let (state, saved) = TrainState::load(&run_cfg.out_dir)?;
        cfg = saved;
        state
    } else {
        TrainState::new(&cfg)?
    };
    let (x, y): (Box<dyn Dataset>, Box<dyn Dataset>) = match &run_cfg.data.task {
        DomainTask::Folder { path_x, path_y } => {
            let opts = FolderOptions { image_size: run_cfg.data.image_size, strict: false };
            (Box::new(load_folder(path_x, &opts)?), Box::new(load_folder(path_y, &opts)?))
        }
        _ => {
            let pair = synth_generate(&run_cfg.data)?;
            (Box::new(pair.train_x), Box::new(pair.train_y))
        }
    };
    std::fs::create_dir_all(&run_cfg.out_dir)?;
    let opts = RunOptions {
        steps: steps.or(run_cfg.steps),
        log_path: Some(run_cfg.out_dir.join("loss.csv")),
        checkpoint_dir: Some(run_cfg.out_dir.clone()),
        checkpoint_every: run_cfg.checkpoint_every,
        model_id: run_cfg.model_id.clone(),
    };
    let summary = train(&mut state, &cfg, x.as_ref(), y.as_ref(), &opts, |r| {
        if r.step % 100 == 0 {
            log::info!("step {} g {:.4} d {:.4}", r.step, r.g.total, r.d.total);
        }
    })?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    checkpoint: &Path,
    dataset: &Path,
    metrics: &str,
    real: Option<&Path>,
    points: usize,
    image_size: Option<usize>,
    direction: Direction,
    out: Option<&Path>,
) -> Result<()> {
    let (meta, _) = load_networks(checkpoint)?;
    let model = Model::load(checkpoint, None)?;
    let size = match image_size {
        Some(s) => s,
        None => preset(&meta.preset_name)?.image_size,
    };
    let wanted: Vec<&str> = metrics.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if let Some(bad) = wanted.iter().find(|m| !["al", "rl", "fid"].contains(m)) {
        return Err(Error::config(format!("unknown metric {bad:?}; known: al, rl, fid")));
    }
    let g = model.translator(direction)?;
    let cs = evenly_spaced(0.0, 1.0, points);
    let mut trajs = Vec::new();
    for x in folder_images(dataset, size)? {
        let outputs = cs
            .iter()
            .map(|&c| crate::inference::translate_constant(g, &x, c, ControlBounds::UNIT))
            .collect::<Result<Vec<_>>>()?;
        trajs.push(Trajectory::new(x, cs.clone(), outputs)?);
    }
    let report = EvalReport::from_trajectories(&trajs, &PixelL2)?;
    if wanted.contains(&"fid") {
        let real = real.ok_or_else(|| Error::config("fid needs --real"))?;
        let fid = fid_harness(&trajs, &folder_images(real, size)?, &ChannelStats, FidMode::WholeTrajectory)?;
        println!("{}", serde_json::json!({ "fid": fid.fid, "jitter": fid.jitter }));
    }
    match out {
        Some(prefix) => report.write(&prefix.with_extension("csv"), &prefix.with_extension("json")),
        None => {
            print!("{}", report.to_csv()?);
            Ok(())
        }
    }
}
