//! Tensor Gauss–Legendre rules on cubes, with dyadic refinement toward a point singularity.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Points per axis and singular-subdivision depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadPolicy {
    pub points: usize,
    pub depth: u32,
}

impl Default for QuadPolicy {
    fn default() -> Self {
        QuadPolicy { points: 4, depth: 12 }
    }
}

impl QuadPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || self.points > 64 {
            return Err(invalid(format!("quadrature points must be in 1..=64, got {}", self.points)));
        }
        if self.depth > 40 {
            return Err(invalid(format!("subdivision depth must be at most 40, got {}", self.depth)));
        }
        Ok(())
    }

    /// Twice the points per axis, the resolution doubling used by stability checks.
    pub fn doubled(&self) -> QuadPolicy {
        QuadPolicy { points: self.points * 2, depth: self.depth }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`, weights summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(points: usize) -> Self {
        assert!(points >= 1);
        let n = points;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussLegendre { nodes, weights }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A normalized rule on one cube: node coordinates (flattened, `n` per node) and weights summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeRule {
    pub n: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CubeRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    /// Weighted average of `f` over the nodes.
    pub fn average<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.weights[i] * f(self.point(i));
        }
        acc
    }
}

/// Builds the averaging rule on `corner + [0, edge)^n`. Cells whose closure meets `singular`
/// are split into `2^n` children until `depth` is exhausted.
pub fn cube_rule(gl: &GaussLegendre, corner: &[f64], edge: f64, singular: Option<&[f64]>, depth: u32) -> CubeRule {
    let n = corner.len();
    let mut rule = CubeRule { n, points: Vec::new(), weights: Vec::new() };
    push_cell(gl, corner, edge, 1.0, singular, depth, &mut rule);
    rule
}

fn closure_contains(corner: &[f64], edge: f64, x: &[f64]) -> bool {
    corner.iter().zip(x).all(|(&c, &xi)| c <= xi && xi <= c + edge)
}

fn push_cell(
    gl: &GaussLegendre,
    corner: &[f64],
    edge: f64,
    mass: f64,
    singular: Option<&[f64]>,
    depth: u32,
    rule: &mut CubeRule,
) {
    let n = corner.len();
    if depth > 0 && singular.is_some_and(|s| closure_contains(corner, edge, s)) {
        let half = edge * 0.5;
        let child_mass = mass / (1u64 << n) as f64;
        let mut child = corner.to_vec();
        for mask in 0..1usize << n {
            for i in 0..n {
                child[i] = corner[i] + if (mask >> i) & 1 == 1 { half } else { 0.0 };
            }
            push_cell(gl, &child, half, child_mass, singular, depth - 1, rule);
        }
        return;
    }
    let m = gl.nodes.len();
    let total = m.pow(n as u32);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let mut w = mass;
        for i in 0..n {
            rule.points.push(corner[i] + edge * gl.nodes[idx[i]]);
            w *= gl.weights[idx[i]];
        }
        rule.weights.push(w);
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < m {
                break;
            }
            idx[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_nodes_are_symmetric() {
        for n in 1..12 {
            let gl = GaussLegendre::new(n);
            let s: f64 = gl.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "n={n} sum={s}");
            for i in 0..n {
                assert!((gl.nodes[i] + gl.nodes[n - 1 - i] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(4);
        for deg in 0..8 {
            let approx: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(deg)).sum();
            assert!((approx - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn two_point_nodes() {
        let gl = GaussLegendre::new(2);
        let a = 0.5 - 0.5 / 3f64.sqrt();
        assert!((gl.nodes[0] - a).abs() < 1e-15);
        assert!((gl.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn subdivided_rule_keeps_unit_mass() {
        let gl = GaussLegendre::new(3);
        let rule = cube_rule(&gl, &[0.0, 0.0], 1.0, Some(&[0.0, 0.0]), 5);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-13);
        assert_eq!(rule.len(), 9 * (1 + 3 * 5));
    }

    #[test]
    fn singular_average_matches_analytic_value() {
        let gl = GaussLegendre::new(4);
        let rule = cube_rule(&gl, &[0.0], 1.0, Some(&[0.0]), 12);
        let avg = rule.average(|x| x[0].abs().powf(-0.5));
        assert!((avg - 2.0).abs() / 2.0 < 2e-3, "avg={avg}");
    }
}
