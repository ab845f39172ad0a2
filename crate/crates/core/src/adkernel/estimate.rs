use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{apply, bdef_entry, AdKernel, AdParams, KernelForm, KernelTable};
use crate::dyadic::{DyadicCube, Window};
use crate::error::{invalid, Result};
use crate::linalg::C64;
use crate::seqspace::{norm, CoeffSequence, SpaceParams, WeightMode};

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    /// Smallest `C` with `|b_{Q,R}| ≤ C b^{DEF}_{Q,R}` on the window.
    pub c: f64,
    pub attaining: Option<(DyadicCube, DyadicCube)>,
    pub pairs: usize,
}

fn better(best: &mut (f64, Option<(DyadicCube, DyadicCube)>), ratio: f64, q: &DyadicCube, r: &DyadicCube) {
    if ratio > best.0 {
        *best = (ratio, Some((q.clone(), r.clone())));
    }
}

/// `sup |b_{Q,R}| / b^{DEF}_{Q,R}` over pairs of window cubes.
pub fn verify_ad(b: &AdKernel, params: &AdParams, window: &Window) -> Result<VerifyReport> {
    let cubes = window.enumerate()?;
    let ratio = |q: &DyadicCube, r: &DyadicCube| -> Result<f64> {
        Ok(b.truncated_entry(q, r)?.norm() / bdef_entry(q, r, params))
    };
    let mut best = (0.0, None);
    let pairs;
    match &b.form {
        KernelForm::Explicit(table) => {
            let mut keys: Vec<_> = table.keys().filter(|(q, r)| window.contains(q) && window.contains(r)).collect();
            keys.sort();
            pairs = keys.len();
            for (q, r) in keys {
                better(&mut best, ratio(q, r)?, q, r);
            }
        }
        KernelForm::Diagonal(_) => {
            pairs = cubes.len();
            for q in &cubes {
                better(&mut best, ratio(q, q)?, q, q);
            }
        }
        _ => {
            pairs = cubes.len() * cubes.len();
            let rows: Vec<(f64, Option<(DyadicCube, DyadicCube)>)> = cubes
                .par_iter()
                .map(|q| {
                    let mut row = (0.0, None);
                    for r in &cubes {
                        better(&mut row, ratio(q, r)?, q, r);
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            for row in rows {
                if row.0 > best.0 {
                    best = row;
                }
            }
        }
    }
    Ok(VerifyReport { c: best.0, attaining: best.1, pairs })
}

/// `(AB)_{Q,P} = Σ_R a_{Q,R} b_{R,P}` with `Q, R, P` in the window, each factor truncated by its own policy.
/// Terms with `R` outside the window are dropped and not counted in any tail bound.
pub fn compose(a: &AdKernel, b: &AdKernel, window: &Window) -> Result<AdKernel> {
    let cubes = window.enumerate()?;
    let n = cubes.len();
    let dense = |k: &AdKernel| -> Result<DMatrix<C64>> {
        let rows: Vec<Vec<C64>> = cubes
            .par_iter()
            .map(|q| cubes.iter().map(|r| k.truncated_entry(q, r)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    };
    let prod = dense(a)? * dense(b)?;
    let mut table = KernelTable::new();
    for i in 0..n {
        for j in 0..n {
            let v = prod[(i, j)];
            if v != C64::new(0.0, 0.0) {
                table.insert((cubes[i].clone(), cubes[j].clone()), v);
            }
        }
    }
    Ok(AdKernel::explicit(table))
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowStats {
    pub window: Window,
    pub delta: f64,
    pub level: f64,
    pub dense: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OpNormReport {
    pub windows: Vec<WindowStats>,
    /// Largest ratio seen over all windows.
    pub estimate: f64,
    /// Relative change of the per-window maximum between the last two windows.
    pub trend: f64,
}

fn gaussian(rng: &mut ChaCha8Rng, m: usize) -> Vec<C64> {
    (0..m)
        .map(|_| C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// Lower estimate of `‖B‖` from delta, single-level and dense random inputs on each window.
pub fn op_norm_estimate(
    b: &AdKernel,
    params: &SpaceParams,
    mode: WeightMode<'_>,
    m: usize,
    windows: &[Window],
    trials: usize,
    seed: u64,
) -> Result<OpNormReport> {
    if windows.is_empty() || trials == 0 {
        return Err(invalid("need at least one window and one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::new();
    for window in windows {
        let cubes = window.enumerate()?;
        let ratio = |t: &CoeffSequence| -> Result<f64> {
            let denom = norm(t, params, mode, window)?.value;
            if denom == 0.0 || !denom.is_finite() {
                return Ok(0.0);
            }
            let out = apply(b, t, window)?.output;
            Ok(norm(&out, params, mode, window)?.value / denom)
        };
        let (mut delta, mut level, mut dense) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..trials {
            let mut t = CoeffSequence::new(window.n, m);
            t.insert(cubes[rng.gen_range(0..cubes.len())].clone(), gaussian(&mut rng, m))?;
            delta = delta.max(ratio(&t)?);

            let j = rng.gen_range(window.j_min..=window.j_max);
            let mut t = CoeffSequence::new(window.n, m);
            for q in window.level_cubes(j) {
                t.insert(q, gaussian(&mut rng, m))?;
            }
            level = level.max(ratio(&t)?);

            let mut t = CoeffSequence::new(window.n, m);
            for q in &cubes {
                t.insert(q.clone(), gaussian(&mut rng, m))?;
            }
            dense = dense.max(ratio(&t)?);
        }
        stats.push(WindowStats { window: *window, delta, level, dense, max: delta.max(level).max(dense) });
    }
    let estimate = stats.iter().map(|s| s.max).fold(0.0, f64::max);
    let trend = match stats.as_slice() {
        [.., a, b] if a.max > 0.0 => (b.max - a.max) / a.max,
        _ => 0.0,
    };
    Ok(OpNormReport { windows: stats, estimate, trend })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspace::{Exponent, Family};

    #[test]
    fn analytic_kernel_verifies_with_its_amplitude() {
        let p = AdParams::new(3.0, 2.0, 1.5);
        let w = Window::new(-1, 1, 2, 1).unwrap();
        let r = verify_ad(&AdKernel::analytic_scaled(p, 2.5), &p, &w).unwrap();
        assert!((r.c - 2.5).abs() < 1e-14);
    }

    #[test]
    fn weaker_envelope_needs_a_larger_constant() {
        let w = Window::new(0, 2, 1, 1).unwrap();
        let b = AdKernel::analytic(AdParams::new(2.0, 1.0, 1.0));
        let r = verify_ad(&b, &AdParams::new(2.0, 1.5, 1.0), &w).unwrap();
        assert!((r.c - 2.0).abs() < 1e-12, "{}", r.c);
    }

    #[test]
    fn compose_with_identity() {
        let w = Window::new(0, 1, 1, 1).unwrap();
        let b = AdKernel::analytic(AdParams::new(2.0, 1.0, 1.0));
        let c = compose(&AdKernel::identity(), &b, &w).unwrap();
        for q in w.enumerate().unwrap() {
            for r in w.enumerate().unwrap() {
                assert_eq!(c.entry(&q, &r).unwrap(), b.entry(&q, &r).unwrap());
            }
        }
    }

    #[test]
    fn identity_has_norm_one() {
        let params = SpaceParams::new(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0)).unwrap();
        let w = Window::new(0, 1, 1, 1).unwrap();
        let r = op_norm_estimate(&AdKernel::identity(), &params, WeightMode::Unweighted, 1, &[w], 3, 7).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-12);
        assert_eq!(r.trend, 0.0);
    }
}
