use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::profile::conjugate_exponent;
use super::WeightModel;
use crate::dyadic::{DyadicCube, Window};
use crate::error::{invalid, Result};
use crate::linalg::{self, CMat};

/// Roots `W^{1/p}` or inverse roots `W^{-1/p}` at the nodes of one cube rule.
struct NodeRoots {
    weights: Vec<f64>,
    diag: Option<Vec<Vec<f64>>>,
    mats: Vec<CMat>,
}

impl NodeRoots {
    fn build(w: &WeightModel, corner: &[f64], edge: f64, power: f64) -> Result<Self> {
        let rule = w.rule_on(corner, edge);
        let mut diag = Vec::with_capacity(rule.len());
        let mut mats = Vec::new();
        let mut is_diag = true;
        for i in 0..rule.len() {
            match w.diag_power(rule.point(i), power)? {
                Some(v) if is_diag => diag.push(v),
                _ => {
                    is_diag = false;
                    mats.push(w.power(rule.point(i), power)?);
                }
            }
        }
        Ok(NodeRoots { weights: rule.weights, diag: is_diag.then_some(diag), mats })
    }

    fn len(&self) -> usize {
        self.weights.len()
    }
}

/// `‖W^{1/p}(x_a) W^{-1/p}(y_b)‖`.
fn pair_norm(x: &NodeRoots, a: usize, y: &NodeRoots, b: usize) -> f64 {
    match (&x.diag, &y.diag) {
        (Some(dx), Some(dy)) => dx[a].iter().zip(&dy[b]).fold(0.0f64, |acc, (u, v)| acc.max(u * v)),
        _ => linalg::spectral_norm(&(&x.mats[a] * &y.mats[b])),
    }
}

/// The defining quantity with `x` ranging over `xs` and `y` over `ys`; the ess-sup is a max over nodes.
fn defining_quantity(xs: &NodeRoots, ys: &NodeRoots, p: f64) -> f64 {
    if p <= 1.0 {
        (0..ys.len())
            .map(|b| (0..xs.len()).map(|a| xs.weights[a] * pair_norm(xs, a, ys, b).powf(p)).sum::<f64>())
            .fold(0.0, f64::max)
    } else {
        let pp = conjugate_exponent(p);
        (0..xs.len())
            .map(|a| {
                let inner: f64 = (0..ys.len()).map(|b| ys.weights[b] * pair_norm(xs, a, ys, b).powf(pp)).sum();
                xs.weights[a] * inner.powf(p / pp)
            })
            .sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApEstimate {
    pub value: f64,
    pub attaining: DyadicCube,
    pub cubes: usize,
}

/// First index of the maximum, so ties resolve to the earliest cube in enumeration order.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("p must be in (0, inf), got {p}")))
    }
}

/// Max over window cubes of the A_p characteristic quantity. A lower bound for the true constant.
pub fn ap_constant(w: &WeightModel, p: f64, window: &Window) -> Result<ApEstimate> {
    check_p(p)?;
    let cubes = window.enumerate()?;
    let values: Vec<f64> = cubes
        .par_iter()
        .map(|q| {
            let (corner, edge) = (q.corner(), q.edge());
            let xs = NodeRoots::build(w, &corner, edge, 1.0 / p)?;
            let ys = NodeRoots::build(w, &corner, edge, -1.0 / p)?;
            Ok(defining_quantity(&xs, &ys, p))
        })
        .collect::<Result<_>>()?;
    let best = argmax(&values);
    Ok(ApEstimate { value: values[best], attaining: cubes[best].clone(), cubes: cubes.len() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApDimensionRow {
    pub i: u32,
    pub value: f64,
    pub attaining: DyadicCube,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApDimensionFit {
    /// Least-squares slope of `log2(max_Q quantity)` against `i`.
    pub d: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub table: Vec<ApDimensionRow>,
}

/// Fits the growth exponent of the A_p-dimension quantity over the expansions `2^i Q`, `i = 0..=i_max`.
pub fn ap_dimension_fit(w: &WeightModel, p: f64, window: &Window, i_max: u32) -> Result<ApDimensionFit> {
    check_p(p)?;
    if i_max < 2 {
        return Err(invalid("i_max must be at least 2"));
    }
    let cubes = window.enumerate()?;
    let mut table = Vec::new();
    for i in 0..=i_max {
        let values: Vec<f64> = cubes
            .par_iter()
            .map(|q| {
                let xs = NodeRoots::build(w, &q.corner(), q.edge(), 1.0 / p)?;
                let big = q.edge() * f64::powi(2.0, i as i32);
                let center = q.center();
                let corner: Vec<f64> = center.iter().map(|c| c - 0.5 * big).collect();
                let ys = NodeRoots::build(w, &corner, big, -1.0 / p)?;
                Ok(defining_quantity(&xs, &ys, p))
            })
            .collect::<Result<_>>()?;
        let best = argmax(&values);
        table.push(ApDimensionRow { i, value: values[best], attaining: cubes[best].clone() });
    }
    let xs: Vec<f64> = table.iter().map(|r| r.i as f64).collect();
    let ys: Vec<f64> = table.iter().map(|r| r.value.log2()).collect();
    let (intercept, d) = crate::stats::linear_fit(&xs, &ys);
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + d * x)).collect();
    Ok(ApDimensionFit { d, intercept, residuals, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadPolicy;

    #[test]
    fn identity_constant_is_one() {
        let w = WeightModel::identity(2, 1);
        for p in [0.5, 1.0, 3.0] {
            let est = ap_constant(&w, p, &Window::new(-1, 1, 2, 1).unwrap()).unwrap();
            assert!((est.value - 1.0).abs() < 1e-14, "p={p}: {}", est.value);
        }
    }

    #[test]
    fn identity_dimension_is_zero() {
        let w = WeightModel::identity(1, 1);
        let fit = ap_dimension_fit(&w, 2.0, &Window::new(0, 1, 1, 1).unwrap(), 3).unwrap();
        assert!(fit.d.abs() < 1e-12);
    }

    #[test]
    fn non_ap_power_grows_with_refinement() {
        let window = Window::new(0, 0, 1, 1).unwrap();
        let mut last = 0.0;
        for depth in [4, 8, 12, 16] {
            let w = WeightModel::new(
                super::super::WeightKind::ScalarPower { d: 1.5 },
                1,
                1,
                QuadPolicy { points: 4, depth },
            )
            .unwrap();
            let v = ap_constant(&w, 1.0, &window).unwrap().value;
            assert!(v > 2.0 * last, "depth {depth}: {v} after {last}");
            last = v;
        }
    }
}
