use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{translate_constant, AestheticCriterion, Translator};
use crate::error::{Error, Result};
use crate::model::{ControlBounds, ImageBatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceStep {
    Grid { c: f64, score: f64 },
    /// One iteration: the bracket it started from and its two probes.
    Ternary { low: f64, high: f64, c1: f64, f1: f64, c2: f64, f2: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub c_star: f64,
    pub score: f64,
    /// Distinct criterion evaluations.
    pub evaluations: usize,
    pub trace: Vec<TraceStep>,
    /// Final bracket, ternary only.
    pub bracket: Option<[f64; 2]>,
}

/// Grid search over `n` evenly spaced points of `[lo, hi]`. Ties go to the
/// lowest `c`.
pub fn exhaustive_search(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, n: usize) -> Result<SearchResult> {
    if n < 2 {
        return Err(Error::config("exhaustive search needs at least two points"));
    }
    if lo >= hi {
        return Err(Error::range(format!("empty search range [{lo}, {hi}]")));
    }
    let mut trace = Vec::with_capacity(n);
    let (mut best_c, mut best) = (lo, f64::NEG_INFINITY);
    for i in 0..n {
        let c = if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
        let score = f(c)?;
        if score > best || trace.is_empty() {
            best = score;
            best_c = c;
        }
        trace.push(TraceStep::Grid { c, score });
    }
    Ok(SearchResult {
        c_star: best_c,
        score: best,
        evaluations: n,
        trace,
        bracket: None,
    })
}

/// Ternary search for the maximum of a unimodal-like `f` on `[left, right]`.
///
/// Each iteration probes the two third points and keeps the two thirds on
/// the better side (`f(c1) <= f(c2)` moves the low end). The result is the
/// midpoint of the final bracket, scored once more.
pub fn ternary_search(
    mut f: impl FnMut(f64) -> Result<f64>,
    left: f64,
    right: f64,
    n: usize,
) -> Result<SearchResult> {
    if !(left < right) {
        return Err(Error::range(format!("ternary search needs left < right, got [{left}, {right}]")));
    }
    if n == 0 {
        return Err(Error::config("ternary search needs at least one iteration"));
    }
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut eval = |c: f64| -> Result<f64> {
        if let Some(&s) = cache.get(&c.to_bits()) {
            return Ok(s);
        }
        let s = f(c)?;
        cache.insert(c.to_bits(), s);
        Ok(s)
    };
    let (mut low, mut high) = (left, right);
    let mut trace = Vec::with_capacity(n);
    for _ in 0..n {
        let third = (high - low) / 3.0;
        let (c1, c2) = (low + third, high - third);
        let (f1, f2) = (eval(c1)?, eval(c2)?);
        trace.push(TraceStep::Ternary { low, high, c1, f1, c2, f2 });
        if f1 <= f2 {
            low = c1;
        } else {
            high = c2;
        }
    }
    let c_star = 0.5 * (low + high);
    let score = eval(c_star)?;
    Ok(SearchResult {
        c_star,
        score,
        evaluations: cache.len(),
        trace,
        bracket: Some([low, high]),
    })
}

/// A search result together with the translation at `c_star`.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub result: SearchResult,
    pub image: ImageBatch,
}

fn scorer<'a>(
    g: &'a dyn Translator,
    x: &'a ImageBatch,
    reference: Option<&'a ImageBatch>,
    criterion: &'a dyn AestheticCriterion,
    bounds: ControlBounds,
) -> Result<impl FnMut(f64) -> Result<f64> + 'a> {
    if x.len() != 1 {
        return Err(Error::shape("search works on one image at a time"));
    }
    if criterion.needs_reference() && reference.is_none() {
        return Err(Error::config(format!("criterion {} needs a reference image", criterion.name())));
    }
    Ok(move |c: f64| {
        let out = translate_constant(g, x, c as f32, bounds)?;
        criterion.score(&out, x, reference)
    })
}

pub fn exhaustive_infer(
    g: &dyn Translator,
    x: &ImageBatch,
    reference: Option<&ImageBatch>,
    criterion: &dyn AestheticCriterion,
    n: usize,
    bounds: ControlBounds,
) -> Result<SearchOutcome> {
    let f = scorer(g, x, reference, criterion, bounds)?;
    let result = exhaustive_search(f, bounds.min as f64, bounds.max as f64, n)?;
    let image = translate_constant(g, x, result.c_star as f32, bounds)?;
    Ok(SearchOutcome { result, image })
}

pub fn ternary_infer(
    g: &dyn Translator,
    x: &ImageBatch,
    reference: Option<&ImageBatch>,
    criterion: &dyn AestheticCriterion,
    n: usize,
    bounds: ControlBounds,
) -> Result<SearchOutcome> {
    let f = scorer(g, x, reference, criterion, bounds)?;
    let result = ternary_search(f, bounds.min as f64, bounds.max as f64, n)?;
    let image = translate_constant(g, x, result.c_star as f32, bounds)?;
    Ok(SearchOutcome { result, image })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad(a: f64) -> impl Fn(f64) -> Result<f64> {
        move |c| Ok(-(c - a) * (c - a))
    }

    #[test]
    fn exhaustive_picks_nearest_grid_point() {
        let r = exhaustive_search(quad(0.3), 0.0, 1.0, 11).unwrap();
        assert!((r.c_star - 0.3).abs() < 1e-12);
        assert_eq!(r.evaluations, 11);
        let cs: Vec<f64> = r
            .trace
            .iter()
            .map(|t| match t {
                TraceStep::Grid { c, .. } => *c,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(cs[0], 0.0);
        assert_eq!(cs[10], 1.0);
    }

    #[test]
    fn exhaustive_tie_goes_low() {
        let r = exhaustive_search(quad(0.25), 0.0, 1.0, 11).unwrap();
        assert!((r.c_star - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ternary_bracket_shrinks_by_two_thirds() {
        let r = ternary_search(quad(0.3), 0.0, 1.0, 10).unwrap();
        let [lo, hi] = r.bracket.unwrap();
        assert!(((hi - lo) - (2.0f64 / 3.0).powi(10)).abs() < 1e-14);
        assert_eq!(r.trace.len(), 10);
        assert_eq!(r.evaluations, 21);
        assert!((r.c_star - 0.3).abs() <= (2.0f64 / 3.0).powi(10) / 2.0);
    }

    #[test]
    fn ternary_monotone_and_constant() {
        let r = ternary_search(|c| Ok(c), 0.0, 1.0, 7).unwrap();
        assert!(r.c_star >= 1.0 - (2.0f64 / 3.0).powi(7));
        let a = ternary_search(|_| Ok(1.0), 0.0, 1.0, 7).unwrap();
        let b = ternary_search(|_| Ok(1.0), 0.0, 1.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.c_star > 0.9);
    }

    #[test]
    fn ternary_rejects_empty_range() {
        assert!(matches!(ternary_search(quad(0.3), 1.0, 1.0, 5), Err(Error::Range(_))));
    }

    proptest! {
        #[test]
        fn ternary_stays_inside_range(a in -1.0f64..2.0, n in 1usize..12) {
            let mut seen = Vec::new();
            ternary_search(|c| { seen.push(c); Ok(-(c - a).abs()) }, 0.0, 1.0, n).unwrap();
            prop_assert!(seen.iter().all(|c| (0.0..=1.0).contains(c)));
        }

        #[test]
        fn ternary_within_half_bracket(a in 0.05f64..0.95, k in 0.1f64..10.0, n in 1usize..15) {
            let r = ternary_search(move |c| Ok(-k * (c - a) * (c - a)), 0.0, 1.0, n).unwrap();
            let [lo, hi] = r.bracket.unwrap();
            prop_assert!((r.c_star - a).abs() <= (hi - lo) / 2.0 + 1e-12);
        }
    }
}
