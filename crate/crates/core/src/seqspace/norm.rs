use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CoeffSequence, Exponent, Family, SpaceParams};
use crate::dyadic::{exp2i, DyadicCube, Window};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, C64};
use crate::weights::{ReducingFamily, WeightModel};

/// How `|·|` is measured at each point: plainly, through `W^{1/p}(x)`, or through `A_Q`.
#[derive(Clone, Copy, Debug)]
pub enum WeightMode<'a> {
    Unweighted,
    Weight(&'a WeightModel),
    Averaging(&'a ReducingFamily),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    /// The cube `P` attaining the τ-sup; absent for `τ = 0`, where the norm is taken over all of space.
    pub attaining: Option<DyadicCube>,
    /// Set when the attaining cube lies on the outer levels or faces of the window.
    pub boundary: bool,
    /// Difference to a run with twice the quadrature points; zero for exact modes.
    pub error_estimate: f64,
}

/// The sequence-space quasi-norm of `t` over `window`.
///
/// For `τ > 0` the sup runs over window cubes `P` that meet the support. For `τ = 0` the norm is the
/// plain `ℓ^q L^p` / `L^p ℓ^q` norm over all of space.
pub fn norm(t: &CoeffSequence, params: &SpaceParams, mode: WeightMode<'_>, window: &Window) -> Result<NormResult> {
    params.validate()?;
    window.validate()?;
    t.check_window(window)?;
    check_mode(t, mode)?;
    if t.is_empty() {
        return Ok(NormResult { value: 0.0, attaining: None, boundary: false, error_estimate: 0.0 });
    }
    let (value, attaining) = evaluate(t, params, mode, window)?;
    let error_estimate = match mode {
        WeightMode::Weight(w) if !w.is_identity() => {
            let fine = w.with_quad(w.quad.doubled())?;
            let (v2, _) = evaluate(t, params, WeightMode::Weight(&fine), window)?;
            (v2 - value).abs()
        }
        _ => 0.0,
    };
    let boundary = attaining.as_ref().is_some_and(|p| window.touches_boundary(p));
    Ok(NormResult { value, attaining, boundary, error_estimate })
}

fn check_mode(t: &CoeffSequence, mode: WeightMode<'_>) -> Result<()> {
    match mode {
        WeightMode::Unweighted => Ok(()),
        WeightMode::Weight(w) => {
            if w.m != t.m {
                return Err(Error::DimensionMismatch { expected: w.m, found: t.m });
            }
            if w.n != t.n {
                return Err(Error::DimensionMismatch { expected: w.n, found: t.n });
            }
            Ok(())
        }
        WeightMode::Averaging(f) if f.m != t.m => Err(Error::DimensionMismatch { expected: f.m, found: t.m }),
        WeightMode::Averaging(_) => Ok(()),
    }
}

/// `2^{js} |Q|^{-1/2}`.
fn level_scale(q: &DyadicCube, s: f64) -> f64 {
    exp2i(q.j).powf(s) / q.volume().sqrt()
}

/// `|A_Q v|` or `|v|`.
fn exact_modulus(q: &DyadicCube, v: &[C64], mode: WeightMode<'_>) -> Result<f64> {
    match mode {
        WeightMode::Averaging(f) => f.norm_apply(q, v),
        _ => Ok(linalg::vnorm(v)),
    }
}

fn evaluate(
    t: &CoeffSequence,
    params: &SpaceParams,
    mode: WeightMode<'_>,
    window: &Window,
) -> Result<(f64, Option<DyadicCube>)> {
    match params.family {
        Family::B => besov(t, params, mode, window),
        Family::F => triebel(t, params, mode, window),
    }
}

/// `(Σ_j S_j^{q/p})^{1/q}` where `S_j` is the `p`-th power of the level `L^p` norm.
fn combine_levels(levels: &BTreeMap<i32, f64>, p: f64, q: Exponent) -> f64 {
    match q {
        Exponent::Infinite => levels.values().fold(0.0f64, |acc, &s| acc.max(s.powf(1.0 / p))),
        Exponent::Finite(q) => levels.values().map(|&s| s.powf(q / p)).sum::<f64>().powf(1.0 / q),
    }
}

/// Ancestors of support cubes with level in `[j_min, j_Q]`, in sorted order.
fn candidate_cubes(t: &CoeffSequence, j_min: i32) -> Vec<DyadicCube> {
    let mut set = BTreeSet::new();
    for q in t.cubes() {
        for a in j_min..=q.j {
            set.insert(q.ancestor(a));
        }
    }
    set.into_iter().collect()
}

/// The first maximal entry, so equal values resolve to the earliest cube.
fn pick_max(rows: Vec<(f64, DyadicCube)>) -> (f64, Option<DyadicCube>) {
    let mut best: Option<(f64, DyadicCube)> = None;
    for (v, p) in rows {
        if best.as_ref().map_or(true, |(b, _)| v > *b) {
            best = Some((v, p));
        }
    }
    match best {
        Some((v, p)) => (v, Some(p)),
        None => (0.0, None),
    }
}

fn besov(
    t: &CoeffSequence,
    params: &SpaceParams,
    mode: WeightMode<'_>,
    window: &Window,
) -> Result<(f64, Option<DyadicCube>)> {
    let p = params.p;
    // |Q| 2^{jsp} |Q|^{-p/2} μ_Q, the contribution of Q to the p-th power of the level L^p norm.
    let masses: Vec<(DyadicCube, f64)> = t
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(q, v)| {
            let scale = level_scale(q, params.s).powf(p) * q.volume();
            let mu = match mode {
                WeightMode::Weight(w) => w.rho_pow(q, p, v)?,
                _ => exact_modulus(q, v, mode)?.powf(p),
            };
            Ok(((*q).clone(), scale * mu))
        })
        .collect::<Result<_>>()?;

    if params.tau == 0.0 {
        let mut levels = BTreeMap::new();
        for (q, c) in &masses {
            *levels.entry(q.j).or_insert(0.0) += c;
        }
        return Ok((combine_levels(&levels, p, params.q), None));
    }

    let mut buckets: HashMap<DyadicCube, BTreeMap<i32, f64>> = HashMap::new();
    for (q, c) in &masses {
        for a in window.j_min..=q.j {
            *buckets.entry(q.ancestor(a)).or_default().entry(q.j).or_insert(0.0) += c;
        }
    }
    let mut rows: Vec<(f64, DyadicCube)> = buckets
        .into_par_iter()
        .map(|(pc, levels)| (pc.volume().powf(-params.tau) * combine_levels(&levels, p, params.q), pc))
        .collect();
    rows.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(pick_max(rows))
}

/// Support cubes together with their ancestors, as a child list per cube.
struct Tree<'a> {
    children: HashMap<DyadicCube, Vec<DyadicCube>>,
    t: &'a CoeffSequence,
}

impl<'a> Tree<'a> {
    fn new(t: &'a CoeffSequence, root_level: i32) -> Self {
        let mut children: HashMap<DyadicCube, BTreeSet<DyadicCube>> = HashMap::new();
        for q in t.cubes() {
            let mut cur = q.clone();
            while cur.j > root_level {
                let parent = cur.parent();
                let fresh = children.entry(parent.clone()).or_default().insert(cur.clone());
                if !fresh {
                    break;
                }
                cur = parent;
            }
        }
        Tree { children: children.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(), t }
    }
}

/// Accumulates `Σ h^q` (or the max for `q = ∞`) of the piecewise-constant level functions.
fn accumulate(acc: f64, h: f64, q: Exponent) -> f64 {
    match q {
        Exponent::Infinite => acc.max(h),
        Exponent::Finite(q) => acc + h.powf(q),
    }
}

/// `(Σ h^q)^{p/q}` from the accumulator.
fn finish(acc: f64, p: f64, q: Exponent) -> f64 {
    match q {
        Exponent::Infinite => acc.powf(p),
        Exponent::Finite(q) => acc.powf(p / q),
    }
}

struct TriebelCtx<'a> {
    tree: Tree<'a>,
    params: SpaceParams,
    mode: WeightMode<'a>,
}

impl TriebelCtx<'_> {
    /// `∫_C (Σ_{j ≥ j_P} h_j^q)^{p/q}` for piecewise-constant level functions.
    fn integrate_exact(&self, c: &DyadicCube, acc: f64) -> Result<f64> {
        let mut acc = acc;
        if let Some(v) = self.tree.t.get(c) {
            let h = level_scale(c, self.params.s) * exact_modulus(c, v, self.mode)?;
            acc = accumulate(acc, h, self.params.q);
        }
        let Some(kids) = self.tree.children.get(c) else {
            return Ok(c.volume() * finish(acc, self.params.p, self.params.q));
        };
        let mut total = 0.0;
        let mut covered = 0.0;
        for kid in kids {
            total += self.integrate_exact(kid, acc)?;
            covered += kid.volume();
        }
        Ok(total + (c.volume() - covered) * finish(acc, self.params.p, self.params.q))
    }
}

fn triebel(
    t: &CoeffSequence,
    params: &SpaceParams,
    mode: WeightMode<'_>,
    window: &Window,
) -> Result<(f64, Option<DyadicCube>)> {
    let (lo, _) = t.level_range().expect("nonempty");
    let root_level = if params.tau == 0.0 { lo } else { window.j_min };
    let ctx = TriebelCtx { tree: Tree::new(t, root_level), params: *params, mode };
    let p = params.p;
    let integral = |c: &DyadicCube| -> Result<f64> {
        match mode {
            WeightMode::Weight(w) => weighted_integral(&ctx, w, c),
            _ => ctx.integrate_exact(c, 0.0),
        }
    };
    if params.tau == 0.0 {
        let roots: BTreeSet<DyadicCube> = t.cubes().map(|q| q.ancestor(lo)).collect();
        let total: f64 = roots.iter().map(&integral).collect::<Result<Vec<_>>>()?.into_iter().sum();
        return Ok((total.powf(1.0 / p), None));
    }
    let cands = candidate_cubes(t, window.j_min);
    let rows: Vec<(f64, DyadicCube)> = cands
        .par_iter()
        .map(|pc| Ok((pc.volume().powf(-params.tau) * integral(pc)?.powf(1.0 / p), pc.clone())))
        .collect::<Result<_>>()?;
    Ok(pick_max(rows))
}

/// W-mode Triebel integral over `c`, walking the support tree and integrating leaf regions by quadrature.
fn weighted_integral(ctx: &TriebelCtx<'_>, w: &WeightModel, c: &DyadicCube) -> Result<f64> {
    let mut chain: Vec<(f64, Vec<C64>)> = Vec::new();
    weighted_rec(ctx, w, c, &mut chain)
}

fn weighted_rec(
    ctx: &TriebelCtx<'_>,
    w: &WeightModel,
    c: &DyadicCube,
    chain: &mut Vec<(f64, Vec<C64>)>,
) -> Result<f64> {
    let pushed = if let Some(v) = ctx.tree.t.get(c) {
        chain.push((level_scale(c, ctx.params.s), v.clone()));
        true
    } else {
        false
    };
    let result = (|| {
        let Some(kids) = ctx.tree.children.get(c) else {
            return leaf_average(ctx, w, c, chain).map(|a| a * c.volume());
        };
        let mut total = 0.0;
        for child in c.children() {
            if kids.binary_search(&child).is_ok() {
                total += weighted_rec(ctx, w, &child, chain)?;
            } else if !chain.is_empty() {
                total += child.volume() * leaf_average(ctx, w, &child, chain)?;
            }
        }
        Ok(total)
    })();
    if pushed {
        chain.pop();
    }
    result
}

/// `⨍_C (Σ_i (σ_i |W^{1/p}(x) t_i|)^q)^{p/q} dx` for the chain of ancestors `(σ_i, t_i)`.
fn leaf_average(ctx: &TriebelCtx<'_>, w: &WeightModel, c: &DyadicCube, chain: &[(f64, Vec<C64>)]) -> Result<f64> {
    if chain.is_empty() {
        return Ok(0.0);
    }
    let (p, q) = (ctx.params.p, ctx.params.q);
    let rule = w.rule(c);
    let mut avg = 0.0;
    for i in 0..rule.len() {
        let x = rule.point(i);
        let mut acc = 0.0;
        for (sigma, v) in chain {
            acc = accumulate(acc, sigma * w.root_norm(x, p, v)?, q);
        }
        avg += rule.weights[i] * finish(acc, p, q);
    }
    Ok(avg)
}

/// The `ḟ^s_{∞,q}` norm in averaging form. Exact: the integrand is piecewise constant.
pub fn norm_f_infty(
    t: &CoeffSequence,
    s: f64,
    q: Exponent,
    family: &ReducingFamily,
    window: &Window,
) -> Result<NormResult> {
    if let Exponent::Finite(qv) = q {
        if !(qv > 0.0 && qv.is_finite()) {
            return Err(invalid(format!("q must be in (0, inf], got {qv}")));
        }
    }
    if !s.is_finite() {
        return Err(invalid("s must be finite"));
    }
    window.validate()?;
    t.check_window(window)?;
    check_mode(t, WeightMode::Averaging(family))?;
    let heights: Vec<(DyadicCube, f64)> = t
        .iter()
        .map(|(c, v)| Ok((c.clone(), level_scale(c, s) * family.norm_apply(c, v)?)))
        .collect::<Result<_>>()?;
    let (value, attaining) = match q {
        Exponent::Infinite => {
            let rows = heights.into_iter().map(|(c, h)| (h, c)).collect();
            pick_max(rows)
        }
        Exponent::Finite(qv) => {
            let mut buckets: BTreeMap<DyadicCube, f64> = BTreeMap::new();
            for (c, h) in &heights {
                let mass = c.volume() * h.powf(qv);
                for a in window.j_min..=c.j {
                    *buckets.entry(c.ancestor(a)).or_insert(0.0) += mass;
                }
            }
            let rows = buckets.into_iter().map(|(pc, m)| ((m / pc.volume()).powf(1.0 / qv), pc)).collect();
            pick_max(rows)
        }
    };
    let boundary = attaining.as_ref().is_some_and(|p| window.touches_boundary(p));
    Ok(NormResult { value, attaining, boundary, error_estimate: 0.0 })
}

/// `(∫ |W^{1/p}(x) f(x)|^p dx)^{1/p}` for `f` constant on each listed cube.
pub fn lp_weighted_norm(pieces: &[(DyadicCube, Vec<C64>)], w: &WeightModel, p: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("p must be in (0, inf), got {p}")));
    }
    let total: f64 = pieces
        .par_iter()
        .map(|(q, v)| Ok(q.volume() * w.rho_pow(q, p, v)?))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    Ok(total.powf(1.0 / p))
}
