//! The full objective, built on a tape so that training and the value-level
//! loss functions share one code path.
//!
//! Per direction `X → Y` with `(c1, c2)` drawn per item:
//!
//! * `Δtar = D_Y(G(x, c2)) − D_Y(G(x, c1))`, `L_mono = hinge(ε − Δtar)`
//! * `Δsrc = D_X(G(x, c1)) − D_X(G(x, c2))`, `L_df = hinge(ε − Δsrc)`
//! * least-squares adversarial terms over both contrastive fakes
//! * `L_cyc = |G_YX(G_XY(x, c), c) − x|₁` for both intensities
//!
//! `L_G = L_adv + λ_cyc L_cyc + λ_mn L_mono + λ_df L_df` and
//! `L_D = L_adv + λ_mn L_mono + λ_df L_df`, summed over directions. The
//! discriminator terms see detached fakes.

use serde::{Deserialize, Serialize};

use super::{hinge_margin_on, l1_on, least_squares_on, ContrastivePair, LossWeights};
use crate::autograd::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{Bound, ConfidenceMap, ControlMap, Discriminator, Generator, ImageBatch};

/// Generators and discriminators of one model. Bidirectional models carry
/// the reverse generator and the source-domain discriminator.
#[derive(Clone, Debug)]
pub struct Networks<T> {
    pub g_xy: Generator<T>,
    pub g_yx: Option<Generator<T>>,
    pub d_y: Discriminator<T>,
    pub d_x: Option<Discriminator<T>>,
}

impl<T: Real> Networks<T> {
    pub fn is_bidirectional(&self) -> bool {
        self.g_yx.is_some() && self.d_x.is_some()
    }

    pub fn cast<U: Real>(&self) -> Networks<U> {
        Networks {
            g_xy: self.g_xy.cast(),
            g_yx: self.g_yx.as_ref().map(Generator::cast),
            d_y: self.d_y.cast(),
            d_x: self.d_x.as_ref().map(Discriminator::cast),
        }
    }
}

/// Inputs of one translation direction.
#[derive(Clone, Copy, Debug)]
pub struct TranslationSide<'a, T> {
    /// Source-domain batch.
    pub source: &'a Tensor<T>,
    /// Real target-domain batch for the discriminator.
    pub target_real: &'a Tensor<T>,
    pub pair: &'a ContrastivePair,
}

/// Everything the totals need. `yx` is required for bidirectional models.
#[derive(Clone, Copy, Debug)]
pub struct LossContext<'a, T> {
    pub nets: &'a Networks<T>,
    pub xy: TranslationSide<'a, T>,
    pub yx: Option<TranslationSide<'a, T>>,
    pub weights: LossWeights,
}

/// Unweighted component values of one direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionTerms {
    pub adv: f64,
    pub cyc: f64,
    pub mono: f64,
    pub df: f64,
    /// Mean of `Δtar` over the confidence maps.
    pub delta_tar: f64,
    /// Mean of `Δsrc`; 0 when no source discriminator is involved.
    pub delta_src: f64,
}

impl DirectionTerms {
    pub fn generator_total(&self, w: &LossWeights, with_df: bool) -> f64 {
        let df = if with_df { w.lambda_df * self.df } else { 0.0 };
        self.adv + w.lambda_cyc * self.cyc + w.lambda_mn * self.mono + df
    }

    pub fn discriminator_total(&self, w: &LossWeights, with_df: bool) -> f64 {
        let df = if with_df { w.lambda_df * self.df } else { 0.0 };
        self.adv + w.lambda_mn * self.mono + df
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub xy: DirectionTerms,
    pub yx: Option<DirectionTerms>,
}

/// Fakes of one direction recorded on a generator tape.
pub(crate) struct DirectionFakes {
    /// `[source; source]`.
    pub source2: Var,
    /// `[G(x, c1); G(x, c2)]`.
    pub fake: Var,
    pub rec: Option<Var>,
    pub batch: usize,
}

pub(crate) fn forward_fakes<T: Real>(
    tape: &mut Tape<T>,
    g_fwd: (&Generator<T>, &Bound),
    g_bwd: Option<(&Generator<T>, &Bound)>,
    side: &TranslationSide<'_, T>,
) -> Result<DirectionFakes> {
    let [n, _, h, w] = side.source.shape();
    if side.pair.len() != n {
        return Err(Error::shape(format!(
            "contrastive pair has {} items, batch has {n}",
            side.pair.len()
        )));
    }
    let source2 = tape.constant(Tensor::stack_batch(&[side.source, side.source]));
    let controls = tape.constant(side.pair.stacked(h, w));
    let fake = g_fwd.0.forward_on(tape, g_fwd.1, source2, controls)?;
    let rec = match g_bwd {
        Some((g, b)) => Some(g.forward_on(tape, b, fake, controls)?),
        None => None,
    };
    Ok(DirectionFakes {
        source2,
        fake,
        rec,
        batch: n,
    })
}

/// Vars of one direction's terms, weighted later.
pub(crate) struct TermVars {
    pub adv: Var,
    pub cyc: Option<Var>,
    pub mono: Option<Var>,
    pub df: Option<Var>,
    pub delta_tar: Option<Var>,
    pub delta_src: Option<Var>,
}

/// `D(high half) − D(low half)` of a score map over `[low; high]` inputs.
fn contrast<T: Real>(tape: &mut Tape<T>, scores: Var, batch: usize, high_minus_low: bool) -> Var {
    let low = tape.slice_batch(scores, 0, batch);
    let high = tape.slice_batch(scores, batch, batch);
    if high_minus_low {
        tape.sub(high, low)
    } else {
        tape.sub(low, high)
    }
}

pub(crate) fn generator_terms<T: Real>(
    tape: &mut Tape<T>,
    fakes: &DirectionFakes,
    d_tar: (&Discriminator<T>, &Bound),
    d_src: Option<(&Discriminator<T>, &Bound)>,
    w: &LossWeights,
) -> Result<TermVars> {
    let s_tar = d_tar.0.forward_on(tape, d_tar.1, fakes.fake)?;
    let adv = least_squares_on(tape, s_tar, 1.0);
    let delta_tar = contrast(tape, s_tar, fakes.batch, true);
    let mono = (w.lambda_mn > 0.0).then(|| hinge_margin_on(tape, delta_tar, w.epsilon, w.reduction));
    let (df, delta_src) = match d_src {
        Some((d, b)) if w.lambda_df > 0.0 => {
            let s_src = d.forward_on(tape, b, fakes.fake)?;
            let delta_src = contrast(tape, s_src, fakes.batch, false);
            (Some(hinge_margin_on(tape, delta_src, w.epsilon, w.reduction)), Some(delta_src))
        }
        _ => (None, None),
    };
    let cyc = fakes.rec.map(|rec| l1_on(tape, rec, fakes.source2));
    Ok(TermVars {
        adv,
        cyc,
        mono,
        df,
        delta_tar: Some(delta_tar),
        delta_src,
    })
}

/// Discriminator terms on detached fakes `[G(x, c1); G(x, c2)]`.
pub(crate) fn discriminator_terms<T: Real>(
    tape: &mut Tape<T>,
    fake: &Tensor<T>,
    target_real: &Tensor<T>,
    d_tar: (&Discriminator<T>, &Bound),
    d_src: Option<(&Discriminator<T>, &Bound)>,
    w: &LossWeights,
) -> Result<TermVars> {
    let batch = fake.batch() / 2;
    let fake = tape.constant(fake.clone());
    let real = tape.constant(target_real.clone());
    let s_real = d_tar.0.forward_on(tape, d_tar.1, real)?;
    let s_fake = d_tar.0.forward_on(tape, d_tar.1, fake)?;
    let real_term = least_squares_on(tape, s_real, 1.0);
    let fake_term = least_squares_on(tape, s_fake, 0.0);
    let adv = tape.add(real_term, fake_term);
    let delta_tar = contrast(tape, s_fake, batch, true);
    let mono = (w.lambda_mn > 0.0).then(|| hinge_margin_on(tape, delta_tar, w.epsilon, w.reduction));
    let (df, delta_src) = match d_src {
        Some((d, b)) if w.lambda_df > 0.0 => {
            let s_src = d.forward_on(tape, b, fake)?;
            let delta_src = contrast(tape, s_src, batch, false);
            (Some(hinge_margin_on(tape, delta_src, w.epsilon, w.reduction)), Some(delta_src))
        }
        _ => (None, None),
    };
    Ok(TermVars {
        adv,
        cyc: None,
        mono,
        df,
        delta_tar: Some(delta_tar),
        delta_src,
    })
}

/// Weighted sum of one direction's term vars.
pub(crate) fn weighted<T: Real>(tape: &mut Tape<T>, t: &TermVars, w: &LossWeights) -> Var {
    let mut total = t.adv;
    let parts = [(t.cyc, w.lambda_cyc), (t.mono, w.lambda_mn), (t.df, w.lambda_df)];
    for (v, lambda) in parts {
        if let Some(v) = v {
            let scaled = tape.affine(v, lambda, 0.0);
            total = tape.add(total, scaled);
        }
    }
    total
}

pub(crate) fn read_terms<T: Real>(tape: &Tape<T>, t: &TermVars) -> DirectionTerms {
    let val = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item().as_f64());
    let mean = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).mean().as_f64());
    DirectionTerms {
        adv: tape.value(t.adv).item().as_f64(),
        cyc: val(t.cyc),
        mono: val(t.mono),
        df: val(t.df),
        delta_tar: mean(t.delta_tar),
        delta_src: mean(t.delta_src),
    }
}

fn check_context<T: Real>(ctx: &LossContext<'_, T>) -> Result<()> {
    ctx.weights.validate()?;
    let nets = ctx.nets;
    let half = nets.g_yx.is_some() != nets.d_x.is_some();
    if half {
        return Err(Error::config(
            "bidirectional models need both the reverse generator and the source discriminator",
        ));
    }
    if nets.is_bidirectional() && ctx.yx.is_none() {
        return Err(Error::config("bidirectional loss needs the reverse-direction inputs"));
    }
    Ok(())
}

/// A recorded objective: the scalar total, per-direction terms, and the
/// parameter handles bound on the tape (generators or discriminators in
/// `Networks` order).
pub struct ObjectiveGraph {
    pub total: Var,
    pub bound: Vec<Bound>,
    pub(crate) terms: Vec<TermVars>,
}

impl ObjectiveGraph {
    pub fn breakdown<T: Real>(&self, tape: &Tape<T>) -> LossBreakdown {
        breakdown_of(tape, self.total, &self.terms)
    }
}

pub(crate) fn breakdown_of<T: Real>(tape: &Tape<T>, total: Var, terms: &[TermVars]) -> LossBreakdown {
    LossBreakdown {
        total: tape.value(total).item().as_f64(),
        xy: read_terms(tape, &terms[0]),
        yx: terms.get(1).map(|t| read_terms(tape, t)),
    }
}

/// Records `L_G`. Generator parameters are leaves with gradients when
/// `trainable`; discriminator parameters never are.
pub fn generator_objective<T: Real>(
    tape: &mut Tape<T>,
    ctx: &LossContext<'_, T>,
    trainable: bool,
) -> Result<ObjectiveGraph> {
    check_context(ctx)?;
    let nets = ctx.nets;
    let bg_xy = nets.g_xy.params().bind(tape, trainable);
    let bg_yx = nets.g_yx.as_ref().map(|g| g.params().bind(tape, trainable));
    let fakes_xy = forward_fakes(tape, (&nets.g_xy, &bg_xy), nets.g_yx.as_ref().zip(bg_yx.as_ref()), &ctx.xy)?;
    let fakes_yx = match (&nets.g_yx, &bg_yx, &ctx.yx) {
        (Some(g), Some(b), Some(side)) => Some(forward_fakes(tape, (g, b), Some((&nets.g_xy, &bg_xy)), side)?),
        _ => None,
    };
    let (total, terms) = generator_terms_all(tape, nets, &fakes_xy, fakes_yx.as_ref(), &ctx.weights)?;
    Ok(ObjectiveGraph {
        total,
        bound: std::iter::once(bg_xy).chain(bg_yx).collect(),
        terms,
    })
}

/// Generator terms for fakes already on the tape, against frozen discriminators.
pub(crate) fn generator_terms_all<T: Real>(
    tape: &mut Tape<T>,
    nets: &Networks<T>,
    fakes_xy: &DirectionFakes,
    fakes_yx: Option<&DirectionFakes>,
    w: &LossWeights,
) -> Result<(Var, Vec<TermVars>)> {
    let bd_y = nets.d_y.params().bind(tape, false);
    let bd_x = nets.d_x.as_ref().map(|d| d.params().bind(tape, false));
    let d_x = nets.d_x.as_ref().zip(bd_x.as_ref());
    let t_xy = generator_terms(tape, fakes_xy, (&nets.d_y, &bd_y), d_x, w)?;
    let mut total = weighted(tape, &t_xy, w);
    let mut out = vec![t_xy];
    if let (Some(f), Some(dx)) = (fakes_yx, d_x) {
        let t_yx = generator_terms(tape, f, dx, Some((&nets.d_y, &bd_y)), w)?;
        let part = weighted(tape, &t_yx, w);
        total = tape.add(total, part);
        out.push(t_yx);
    }
    Ok((total, out))
}

/// Fakes `[G(x, c1); G(x, c2)]` of one direction with the real target batch.
#[derive(Clone, Copy, Debug)]
pub struct DetachedFakes<'a, T> {
    pub fake: &'a Tensor<T>,
    pub target_real: &'a Tensor<T>,
}

/// Records `L_D` on detached fakes. `yx` is used only by bidirectional nets.
pub fn discriminator_objective<T: Real>(
    tape: &mut Tape<T>,
    nets: &Networks<T>,
    xy: DetachedFakes<'_, T>,
    yx: Option<DetachedFakes<'_, T>>,
    w: &LossWeights,
    trainable: bool,
) -> Result<ObjectiveGraph> {
    w.validate()?;
    let bd_y = nets.d_y.params().bind(tape, trainable);
    let bd_x = nets.d_x.as_ref().map(|d| d.params().bind(tape, trainable));
    let d_x = nets.d_x.as_ref().zip(bd_x.as_ref());
    if d_x.is_some() && yx.is_none() {
        return Err(Error::config("bidirectional loss needs the reverse-direction fakes"));
    }
    let t_xy = discriminator_terms(tape, xy.fake, xy.target_real, (&nets.d_y, &bd_y), d_x, w)?;
    let mut total = weighted(tape, &t_xy, w);
    let mut terms = vec![t_xy];
    if let (Some(f), Some(dx)) = (yx, d_x) {
        let t_yx = discriminator_terms(tape, f.fake, f.target_real, dx, Some((&nets.d_y, &bd_y)), w)?;
        let part = weighted(tape, &t_yx, w);
        total = tape.add(total, part);
        terms.push(t_yx);
    }
    Ok(ObjectiveGraph {
        total,
        bound: std::iter::once(bd_y).chain(bd_x).collect(),
        terms,
    })
}

/// `L_G` with every component, evaluated without gradients.
pub fn total_generator_loss<T: Real>(ctx: &LossContext<'_, T>) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let graph = generator_objective(&mut tape, ctx, false)?;
    Ok(graph.breakdown(&tape))
}

/// `L_D` with every component, evaluated without gradients.
pub fn total_discriminator_loss<T: Real>(ctx: &LossContext<'_, T>) -> Result<LossBreakdown> {
    check_context(ctx)?;
    let nets = ctx.nets;
    let mut tape = Tape::new();
    let bg_xy = nets.g_xy.params().bind(&mut tape, false);
    let fx = forward_fakes(&mut tape, (&nets.g_xy, &bg_xy), None, &ctx.xy)?;
    let fake_xy = tape.value(fx.fake).clone();
    let fake_yx = match (&nets.g_yx, &ctx.yx) {
        (Some(g), Some(side)) => {
            let b = g.params().bind(&mut tape, false);
            let f = forward_fakes(&mut tape, (g, &b), None, side)?;
            Some((tape.value(f.fake).clone(), side.target_real))
        }
        _ => None,
    };
    let xy = DetachedFakes {
        fake: &fake_xy,
        target_real: ctx.xy.target_real,
    };
    let yx = fake_yx.as_ref().map(|(fake, real)| DetachedFakes {
        fake,
        target_real: real,
    });
    let graph = discriminator_objective(&mut tape, nets, xy, yx, &ctx.weights, false)?;
    Ok(graph.breakdown(&tape))
}

fn delta(
    d: &Discriminator<f32>,
    g: &Generator<f32>,
    x: &ImageBatch,
    pair: &ContrastivePair,
    high_minus_low: bool,
) -> Result<ConfidenceMap> {
    let [n, _, h, w] = x.shape();
    if pair.len() != n {
        return Err(Error::shape(format!("pair has {} items, batch has {n}", pair.len())));
    }
    let mut tape = Tape::new();
    let bg = g.params().bind(&mut tape, false);
    let bd = d.params().bind(&mut tape, false);
    let xx = tape.constant(Tensor::stack_batch(&[x.tensor(), x.tensor()]));
    let cc = tape.constant(pair.stacked(h, w));
    let fake = g.forward_on(&mut tape, &bg, xx, cc)?;
    let s = d.forward_on(&mut tape, &bd, fake)?;
    let dv = contrast(&mut tape, s, n, high_minus_low);
    Ok(ConfidenceMap(tape.value(dv).clone()))
}

/// `Δtar = D_tar(G(x, c2)) − D_tar(G(x, c1))`.
pub fn confidence_delta_target(
    d_tar: &Discriminator<f32>,
    g: &Generator<f32>,
    x: &ImageBatch,
    pair: &ContrastivePair,
) -> Result<ConfidenceMap> {
    delta(d_tar, g, x, pair, true)
}

/// `Δsrc = D_src(G(x, c1)) − D_src(G(x, c2))`.
pub fn confidence_delta_source(
    d_src: &Discriminator<f32>,
    g: &Generator<f32>,
    x: &ImageBatch,
    pair: &ContrastivePair,
) -> Result<ConfidenceMap> {
    delta(d_src, g, x, pair, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Least-squares GAN losses of one discriminator on a real and a fake batch.
pub fn adversarial_losses(d: &Discriminator<f32>, real: &ImageBatch, fake: &ImageBatch) -> Result<AdversarialLosses> {
    let mut tape = Tape::new();
    let b = d.params().bind(&mut tape, false);
    let r = tape.constant(real.tensor().clone());
    let f = tape.constant(fake.tensor().clone());
    let sr = d.forward_on(&mut tape, &b, r)?;
    let sf = d.forward_on(&mut tape, &b, f)?;
    let real_term = least_squares_on(&mut tape, sr, 1.0);
    let fake_term = least_squares_on(&mut tape, sf, 0.0);
    let g_term = least_squares_on(&mut tape, sf, 1.0);
    Ok(AdversarialLosses {
        d_loss: (tape.value(real_term).item() + tape.value(fake_term).item()) as f64,
        g_loss: tape.value(g_term).item() as f64,
    })
}

/// `mean |G_bwd(G_fwd(x, c), c) − x|`.
pub fn cycle_loss(g_fwd: &Generator<f32>, g_bwd: &Generator<f32>, x: &ImageBatch, c: &ControlMap) -> Result<f64> {
    let mut tape = Tape::new();
    let bf = g_fwd.params().bind(&mut tape, false);
    let bb = g_bwd.params().bind(&mut tape, false);
    let xv = tape.constant(x.tensor().clone());
    let cv = tape.constant(c.tensor().clone());
    let fake = g_fwd.forward_on(&mut tape, &bf, xv, cv)?;
    let rec = g_bwd.forward_on(&mut tape, &bb, fake, cv)?;
    let l = l1_on(&mut tape, rec, xv);
    Ok(tape.value(l).item() as f64)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::losses::preset;
    use crate::model::{DiscriminatorSpec, GeneratorSpec, InitScheme};

    fn tiny_g() -> GeneratorSpec {
        GeneratorSpec {
            base_channels: 2,
            depth: 2,
            init: InitScheme::HeNormal { slope: 0.2 },
            ..GeneratorSpec::desk()
        }
    }

    fn tiny_d() -> DiscriminatorSpec {
        DiscriminatorSpec {
            base_channels: 2,
            init: InitScheme::HeNormal { slope: 0.2 },
            ..DiscriminatorSpec::desk()
        }
    }

    fn nets<T: Real>(bidirectional: bool, seed: u64) -> Networks<T> {
        Networks {
            g_xy: Generator::build(tiny_g(), seed).unwrap(),
            g_yx: bidirectional.then(|| Generator::build(tiny_g(), seed + 1).unwrap()),
            d_y: Discriminator::build(tiny_d(), seed + 2).unwrap(),
            d_x: bidirectional.then(|| Discriminator::build(tiny_d(), seed + 3).unwrap()),
        }
    }

    fn random<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Tensor<T> {
        Tensor::from_fn([n, 3, 32, 32], |_| T::from_f64_lossy(rng.random_range(-1.0..1.0)))
    }

    fn constant_d(value: f32) -> Discriminator<f32> {
        let mut d = Discriminator::<f32>::build(DiscriminatorSpec::desk(), 0).unwrap();
        for v in d.params_mut().get_mut("head.weight").unwrap().data_mut() {
            *v = 0.0;
        }
        for v in d.params_mut().get_mut("head.bias").unwrap().data_mut() {
            *v = value;
        }
        d
    }

    fn constant_g(value: f32) -> Generator<f32> {
        let mut g = Generator::<f32>::build(GeneratorSpec::desk(), 0).unwrap();
        for v in g.params_mut().get_mut("out.weight").unwrap().data_mut() {
            *v = 0.0;
        }
        for v in g.params_mut().get_mut("out.bias").unwrap().data_mut() {
            *v = value.atanh();
        }
        g
    }

    #[test]
    fn adversarial_arithmetic() {
        let x = ImageBatch::new(Tensor::zeros([1, 3, 64, 64])).unwrap();
        let half = adversarial_losses(&constant_d(0.5), &x, &x).unwrap();
        assert!((half.d_loss - 0.5).abs() < 1e-7 && (half.g_loss - 0.25).abs() < 1e-7, "{half:?}");
        let one = adversarial_losses(&constant_d(1.0), &x, &x).unwrap();
        assert_eq!(one.g_loss, 0.0);
    }

    #[test]
    fn cycle_of_constant_offset() {
        let x = ImageBatch::new(Tensor::zeros([2, 3, 64, 64])).unwrap();
        let c = ControlMap::constant(2, 64, 64, 0.4).unwrap();
        let l = cycle_loss(&constant_g(0.7), &constant_g(0.1), &x, &c).unwrap();
        assert!((l - 0.1).abs() < 1e-5, "{l}");
    }

    #[test]
    fn cycle_matches_composed_forwards() {
        let n = nets::<f32>(true, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = ImageBatch::new(random(&mut rng, 2)).unwrap();
        let c = ControlMap::constant_per_item(&[0.2, 0.9], 32, 32, Default::default()).unwrap();
        let g_yx = n.g_yx.as_ref().unwrap();
        let rec = g_yx.translate(&n.g_xy.translate(&x, &c).unwrap(), &c).unwrap();
        let oracle = rec.tensor().data().iter().zip(x.tensor().data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>()
            / x.tensor().len() as f64;
        let l = cycle_loss(&n.g_xy, g_yx, &x, &c).unwrap();
        assert!((l - oracle).abs() < 1e-6);
    }

    #[test]
    fn deltas_match_direct_recomputation() {
        let n = nets::<f32>(true, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = ImageBatch::new(random(&mut rng, 2)).unwrap();
        let pair = ContrastivePair::new(vec![0.1, 0.3], vec![0.6, 0.95]).unwrap();
        let d_x = n.d_x.as_ref().unwrap();
        let tar = confidence_delta_target(&n.d_y, &n.g_xy, &x, &pair).unwrap();
        let src = confidence_delta_source(d_x, &n.g_xy, &x, &pair).unwrap();
        let lo = n.g_xy.translate(&x, &pair.low_map(32, 32).unwrap()).unwrap();
        let hi = n.g_xy.translate(&x, &pair.high_map(32, 32).unwrap()).unwrap();
        let (sy_lo, sy_hi) = (n.d_y.score(&lo).unwrap(), n.d_y.score(&hi).unwrap());
        let (sx_lo, sx_hi) = (d_x.score(&lo).unwrap(), d_x.score(&hi).unwrap());
        for i in 0..tar.tensor().len() {
            let t = sy_hi.tensor().data()[i] - sy_lo.tensor().data()[i];
            let s = sx_lo.tensor().data()[i] - sx_hi.tensor().data()[i];
            assert!((tar.tensor().data()[i] - t).abs() < 1e-6);
            assert!((src.tensor().data()[i] - s).abs() < 1e-6);
        }
    }

    #[test]
    fn equal_intensities_give_zero_delta_and_swap_flips_sign() {
        let n = nets::<f32>(false, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ImageBatch::new(random(&mut rng, 1)).unwrap();
        let same = ContrastivePair::new_unchecked(vec![0.4], vec![0.4]);
        let d = confidence_delta_target(&n.d_y, &n.g_xy, &x, &same).unwrap();
        assert!(d.tensor().data().iter().all(|&v| v == 0.0));
        let fwd = ContrastivePair::new_unchecked(vec![0.2], vec![0.7]);
        let rev = ContrastivePair::new_unchecked(vec![0.7], vec![0.2]);
        let a = confidence_delta_target(&n.d_y, &n.g_xy, &x, &fwd).unwrap();
        let b = confidence_delta_target(&n.d_y, &n.g_xy, &x, &rev).unwrap();
        for (p, q) in a.tensor().data().iter().zip(b.tensor().data()) {
            assert_eq!(*p, -*q);
        }
    }

    #[test]
    fn weighted_total_example() {
        let w = preset("yosemite").unwrap().weights;
        let t = DirectionTerms {
            adv: 0.5,
            cyc: 0.02,
            mono: 0.25,
            df: 0.04,
            ..Default::default()
        };
        assert!((t.generator_total(&w, true) - 0.96).abs() < 1e-12);
        assert!((t.generator_total(&w, false) - 0.95).abs() < 1e-12);
        assert!((t.discriminator_total(&w, true) - 0.76).abs() < 1e-12);
        assert_eq!(DirectionTerms::default().generator_total(&w, true), 0.0);
    }

    fn check_totals(bidirectional: bool) {
        let n = nets::<f64>(bidirectional, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = (random(&mut rng, 2), random(&mut rng, 2));
        let pair = ContrastivePair::new(vec![0.1, 0.5], vec![0.4, 0.9]).unwrap();
        let w = LossWeights::default();
        let ctx = LossContext {
            nets: &n,
            xy: TranslationSide { source: &x, target_real: &y, pair: &pair },
            yx: bidirectional.then_some(TranslationSide { source: &y, target_real: &x, pair: &pair }),
            weights: w,
        };
        let g = total_generator_loss(&ctx).unwrap();
        let d = total_discriminator_loss(&ctx).unwrap();
        let dirs: Vec<_> = std::iter::once(g.xy).chain(g.yx).collect();
        let sum: f64 = dirs.iter().map(|t| t.generator_total(&w, bidirectional)).sum();
        assert!((g.total - sum).abs() < 1e-12, "{} vs {sum}", g.total);
        let dirs: Vec<_> = std::iter::once(d.xy).chain(d.yx).collect();
        let sum: f64 = dirs.iter().map(|t| t.discriminator_total(&w, bidirectional)).sum();
        assert!((d.total - sum).abs() < 1e-12);
        if !bidirectional {
            assert_eq!((g.xy.cyc, g.xy.df, d.xy.df), (0.0, 0.0, 0.0));
            assert!(g.yx.is_none());
        } else {
            assert!(g.xy.cyc > 0.0 && g.yx.unwrap().df > 0.0);
        }
    }

    #[test]
    fn totals_equal_summed_components() {
        check_totals(true);
        check_totals(false);
    }

    #[test]
    fn bidirectional_without_reverse_generator_is_a_config_error() {
        let mut n = nets::<f64>(true, 1);
        n.g_yx = None;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = (random(&mut rng, 1), random(&mut rng, 1));
        let pair = ContrastivePair::new(vec![0.1], vec![0.4]).unwrap();
        let side = TranslationSide { source: &x, target_real: &y, pair: &pair };
        let ctx = LossContext { nets: &n, xy: side, yx: Some(side), weights: LossWeights::default() };
        assert!(matches!(total_generator_loss(&ctx), Err(Error::Config(_))));
        let full = nets::<f64>(true, 1);
        let ctx = LossContext { nets: &full, xy: side, yx: None, weights: LossWeights::default() };
        assert!(matches!(total_discriminator_loss(&ctx), Err(Error::Config(_))));
    }

    #[test]
    fn generator_objective_gradient_matches_finite_differences() {
        let n = nets::<f64>(true, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (x, y) = (random(&mut rng, 1), random(&mut rng, 1));
        let pair = ContrastivePair::new(vec![0.2], vec![0.8]).unwrap();
        // large margin keeps the hinge active on both directions
        let w = LossWeights { epsilon: 5.0, ..LossWeights::default() };
        let ctx_of = |n: &Networks<f64>| -> f64 {
            let ctx = LossContext {
                nets: n,
                xy: TranslationSide { source: &x, target_real: &y, pair: &pair },
                yx: Some(TranslationSide { source: &y, target_real: &x, pair: &pair }),
                weights: w,
            };
            total_generator_loss(&ctx).unwrap().total
        };
        let ctx = LossContext {
            nets: &n,
            xy: TranslationSide { source: &x, target_real: &y, pair: &pair },
            yx: Some(TranslationSide { source: &y, target_real: &x, pair: &pair }),
            weights: w,
        };
        let mut tape = Tape::new();
        let graph = generator_objective(&mut tape, &ctx, true).unwrap();
        let grads = tape.backward(graph.total);
        let step = 1e-6;
        for (pi, name) in n.g_xy.params().names().iter().enumerate() {
            let analytic = grads.get(graph.bound[0].var(pi)).unwrap();
            let len = analytic.len();
            for j in [0, len / 2, len - 1] {
                let mut plus = n.clone();
                plus.g_xy.params_mut().tensors_mut()[pi].data_mut()[j] += step;
                let mut minus = n.clone();
                minus.g_xy.params_mut().tensors_mut()[pi].data_mut()[j] -= step;
                let numeric = (ctx_of(&plus) - ctx_of(&minus)) / (2.0 * step);
                let a = analytic.data()[j];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-3 || (a - numeric).abs() < 1e-8, "{name}[{j}]: {a} vs {numeric}");
            }
        }
    }
}
