use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_global_norm, Adam};
use super::{lr_schedule, TrainConfig, UpdateOrder};
use crate::autograd::{Grads, Tape, Tensor};
use crate::error::{Error, Result};
use crate::losses::objective::{forward_fakes, generator_terms_all};
use crate::losses::{cig_sample, discriminator_objective, DetachedFakes, LossBreakdown, Networks, TranslationSide};
use crate::model::{Bound, Discriminator, Generator, ImageBatch, Params};

const ROLLING_WINDOW: usize = 50;

/// Everything needed to continue training bit-for-bit.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub step: u64,
    pub epoch: usize,
    pub nets: Networks<f32>,
    /// Generator moments in `Networks` order, then discriminator moments.
    pub(crate) opt_g: Vec<Adam>,
    pub(crate) opt_d: Vec<Adam>,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) cursor: Cursor,
    pub(crate) rolling: Rolling,
}

/// Position in the per-epoch shuffles of both domains.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct Cursor {
    pub order_x: Vec<usize>,
    pub pos_x: usize,
    pub order_y: Vec<usize>,
    pub pos_y: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct Rolling {
    pub g: VecDeque<f64>,
    pub d: VecDeque<f64>,
}

impl Rolling {
    fn push(&mut self, g: f64, d: f64) {
        for (q, v) in [(&mut self.g, g), (&mut self.d, d)] {
            q.push_back(v);
            if q.len() > ROLLING_WINDOW {
                q.pop_front();
            }
        }
    }
}

/// Network init seeds derived from the run seed.
fn net_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k)
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let bi = cfg.bidirectional;
        let nets = Networks {
            g_xy: Generator::build(cfg.generator.clone(), net_seed(cfg.seed, 0))?,
            g_yx: if bi {
                Some(Generator::build(cfg.generator.clone(), net_seed(cfg.seed, 1))?)
            } else {
                None
            },
            d_y: Discriminator::build(cfg.discriminator.clone(), net_seed(cfg.seed, 2))?,
            d_x: if bi {
                Some(Discriminator::build(cfg.discriminator.clone(), net_seed(cfg.seed, 3))?)
            } else {
                None
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(7);
        Ok(Self::from_parts(nets, rng))
    }

    pub(crate) fn from_parts(nets: Networks<f32>, rng: ChaCha8Rng) -> Self {
        let opt_g = generators(&nets).map(|g| Adam::new(g.params())).collect();
        let opt_d = discriminators(&nets).map(|d| Adam::new(d.params())).collect();
        TrainState {
            step: 0,
            epoch: 0,
            nets,
            opt_g,
            opt_d,
            rng,
            cursor: Cursor::default(),
            rolling: Rolling::default(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Mean generator and discriminator totals over the recent steps.
    pub fn rolling_means(&self) -> (f64, f64) {
        let mean = |q: &VecDeque<f64>| if q.is_empty() { 0.0 } else { q.iter().sum::<f64>() / q.len() as f64 };
        (mean(&self.rolling.g), mean(&self.rolling.d))
    }

    /// Indices of the next batch of each domain. Domain X drives the epoch
    /// counter; both domains are reshuffled when exhausted.
    pub fn next_indices(&mut self, len_x: usize, len_y: usize, batch: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if len_x < batch || len_y < batch {
            return Err(Error::config(format!(
                "batch size {batch} exceeds dataset sizes ({len_x}, {len_y})"
            )));
        }
        let c = &mut self.cursor;
        if c.order_x.len() != len_x || c.pos_x + batch > len_x {
            if c.order_x.len() == len_x {
                self.epoch += 1;
            }
            c.order_x = (0..len_x).collect();
            c.order_x.shuffle(&mut self.rng);
            c.pos_x = 0;
        }
        if c.order_y.len() != len_y || c.pos_y + batch > len_y {
            c.order_y = (0..len_y).collect();
            c.order_y.shuffle(&mut self.rng);
            c.pos_y = 0;
        }
        let ix = c.order_x[c.pos_x..c.pos_x + batch].to_vec();
        let iy = c.order_y[c.pos_y..c.pos_y + batch].to_vec();
        c.pos_x += batch;
        c.pos_y += batch;
        Ok((ix, iy))
    }
}

fn generators(n: &Networks<f32>) -> impl Iterator<Item = &Generator<f32>> {
    std::iter::once(&n.g_xy).chain(n.g_yx.as_ref())
}

fn discriminators(n: &Networks<f32>) -> impl Iterator<Item = &Discriminator<f32>> {
    std::iter::once(&n.d_y).chain(n.d_x.as_ref())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub d: LossBreakdown,
    pub g: LossBreakdown,
}

fn collect(grads: &Grads<f32>, bound: &Bound, params: &Params<f32>) -> Vec<Tensor<f32>> {
    (0..params.len())
        .map(|i| grads.get(bound.var(i)).cloned().unwrap_or_else(|| Tensor::zeros(params.tensors()[i].shape())))
        .collect()
}

/// Applies Adam to each network; nothing is written unless every proposed
/// parameter is finite.
fn update(
    params: Vec<&mut Params<f32>>,
    opts: &mut [Adam],
    mut grads: Vec<Vec<Tensor<f32>>>,
    cfg: &TrainConfig,
    lr: f64,
    what: &str,
    step: u64,
) -> Result<()> {
    if let Some(max) = cfg.grad_clip {
        let mut all: Vec<Tensor<f32>> = grads.iter().flatten().cloned().collect();
        clip_global_norm(&mut all, max);
        let mut it = all.into_iter();
        for g in grads.iter_mut() {
            for t in g.iter_mut() {
                *t = it.next().expect("same count");
            }
        }
    }
    if grads.iter().flatten().any(|g| !g.all_finite()) {
        return Err(Error::NonFinite {
            what: format!("{what} gradients"),
            step,
        });
    }
    let proposals: Vec<(Params<f32>, Adam)> = params
        .iter()
        .zip(opts.iter())
        .zip(&grads)
        .map(|((p, o), g)| o.propose(p, g, lr, cfg.adam()))
        .collect();
    if proposals.iter().any(|(p, _)| !p.all_finite()) {
        return Err(Error::NonFinite {
            what: format!("{what} parameters"),
            step,
        });
    }
    for ((p, o), (np, no)) in params.into_iter().zip(opts.iter_mut()).zip(proposals) {
        *p = np;
        *o = no;
    }
    Ok(())
}

fn check_loss(v: f64, what: &str, step: u64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            step,
        })
    }
}

/// One optimization step on `(batch_x, batch_y)`: fresh contrastive pairs
/// per item, then a discriminator and a generator update (order per config).
pub fn train_step(state: &mut TrainState, cfg: &TrainConfig, batch_x: &ImageBatch, batch_y: &ImageBatch) -> Result<StepReport> {
    let step = state.step;
    let lr = lr_schedule(state.epoch, cfg);
    let w = cfg.weights;
    let bi = state.nets.is_bidirectional();
    if batch_x.len() != batch_y.len() {
        return Err(Error::shape("domain batches differ in size"));
    }
    let n = batch_x.len();
    let pair_xy = cig_sample(&mut state.rng, n, cfg.delta_min)?;
    let pair_yx = if bi { Some(cig_sample(&mut state.rng, n, cfg.delta_min)?) } else { None };

    let (x, y) = (batch_x.tensor(), batch_y.tensor());
    let side_xy = TranslationSide {
        source: x,
        target_real: y,
        pair: &pair_xy,
    };

    // generator forward; its tape is reused for the generator update
    let mut gt = Tape::new();
    let nets = &state.nets;
    let bg_xy = nets.g_xy.params().bind(&mut gt, true);
    let bg_yx = nets.g_yx.as_ref().map(|g| g.params().bind(&mut gt, true));
    let fakes_xy = forward_fakes(&mut gt, (&nets.g_xy, &bg_xy), nets.g_yx.as_ref().zip(bg_yx.as_ref()), &side_xy)?;
    let fakes_yx = match (&nets.g_yx, &bg_yx, &pair_yx) {
        (Some(g), Some(b), Some(pair)) => {
            let side = TranslationSide {
                source: y,
                target_real: x,
                pair,
            };
            Some(forward_fakes(&mut gt, (g, b), Some((&nets.g_xy, &bg_xy)), &side)?)
        }
        _ => None,
    };
    let fake_xy = gt.value(fakes_xy.fake).clone();
    let fake_yx = fakes_yx.as_ref().map(|f| gt.value(f.fake).clone());

    let d_step = |state: &mut TrainState| -> Result<LossBreakdown> {
        let mut dt = Tape::new();
        let xy = DetachedFakes {
            fake: &fake_xy,
            target_real: y,
        };
        let yx = fake_yx.as_ref().map(|fake| DetachedFakes { fake, target_real: x });
        let graph = discriminator_objective(&mut dt, &state.nets, xy, yx, &w, true)?;
        let report = graph.breakdown(&dt);
        check_loss(report.total, "discriminator loss", step)?;
        let grads = dt.backward(graph.total);
        let nets = &mut state.nets;
        let mut grads_all = vec![collect(&grads, &graph.bound[0], nets.d_y.params())];
        let mut params = vec![nets.d_y.params_mut()];
        if let Some(d) = nets.d_x.as_mut() {
            grads_all.push(collect(&grads, &graph.bound[1], d.params()));
            params.push(d.params_mut());
        }
        update(params, &mut state.opt_d, grads_all, cfg, lr, "discriminator", step)?;
        Ok(report)
    };

    let g_step = |state: &mut TrainState, gt: &mut Tape<f32>| -> Result<LossBreakdown> {
        let (total, terms) = generator_terms_all(gt, &state.nets, &fakes_xy, fakes_yx.as_ref(), &w)?;
        let report = crate::losses::objective::breakdown_of(gt, total, &terms);
        check_loss(report.total, "generator loss", step)?;
        let grads = gt.backward(total);
        let nets = &mut state.nets;
        let mut grads_all = vec![collect(&grads, &bg_xy, nets.g_xy.params())];
        let mut params = vec![nets.g_xy.params_mut()];
        if let (Some(g), Some(b)) = (nets.g_yx.as_mut(), bg_yx.as_ref()) {
            grads_all.push(collect(&grads, b, g.params()));
            params.push(g.params_mut());
        }
        update(params, &mut state.opt_g, grads_all, cfg, lr, "generator", step)?;
        Ok(report)
    };

    let (d, g) = match cfg.update_order {
        UpdateOrder::DThenG => {
            let d = d_step(state)?;
            (d, g_step(state, &mut gt)?)
        }
        UpdateOrder::GThenD => {
            let g = g_step(state, &mut gt)?;
            (d_step(state)?, g)
        }
    };
    state.rolling.push(g.total, d.total);
    state.step += 1;
    Ok(StepReport {
        step,
        epoch: state.epoch,
        lr,
        d,
        g,
    })
}
