use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{level_factor, AdKernel, AdParams, KernelForm, Part};
use crate::dyadic::{exp2i, DyadicCube, Lattice, Window};
use crate::error::Result;
use crate::linalg::{self, C64};
use crate::seqspace::CoeffSequence;
use crate::stats::unit_ball_volume;

#[derive(Clone, Debug, Serialize)]
pub struct ApplyResult {
    #[serde(skip)]
    pub output: CoeffSequence,
    /// Upper bound, uniform over output cubes, for `|(Bt)_Q - computed_Q|` caused by truncation.
    pub tail_bound: f64,
}

/// Support of `t` at one level.
struct Level {
    j: i32,
    cubes: Vec<DyadicCube>,
    values: Vec<Vec<C64>>,
    index: HashMap<Lattice, usize>,
    max_norm: f64,
}

fn levels_of(t: &CoeffSequence) -> Vec<Level> {
    let mut out: Vec<Level> = Vec::new();
    for (q, v) in t.iter() {
        if out.last().map_or(true, |l| l.j != q.j) {
            out.push(Level { j: q.j, cubes: Vec::new(), values: Vec::new(), index: HashMap::new(), max_norm: 0.0 });
        }
        let level = out.last_mut().expect("just pushed");
        level.index.insert(q.k.clone(), level.cubes.len());
        level.cubes.push(q.clone());
        level.max_norm = level.max_norm.max(linalg::vnorm(v));
        level.values.push(v.clone());
    }
    out
}

/// Envelope data of an analytic kernel, possibly restricted to one triangle.
#[derive(Clone, Copy)]
struct Envelope {
    params: AdParams,
    amp: f64,
    part: Option<Part>,
}

impl Envelope {
    fn keeps_level(&self, jq: i32, jr: i32) -> bool {
        match self.part {
            None => true,
            Some(Part::Upper) => jr <= jq,
            Some(Part::Lower) => jr > jq,
        }
    }

    /// `ρ₀` with `amp λ (1+ρ)^{-D} ≥ ε ⇔ 1+ρ ≤ ρ₀`.
    fn rho0(&self, jq: i32, jr: i32, eps: f64) -> f64 {
        (self.amp * level_factor(jq, jr, &self.params) / eps).powf(1.0 / self.params.d)
    }

    /// Bound for `Σ_R amp λ (1+ρ_R)^{-D}` over level-`jr` cubes with `ρ_R > a₀`.
    fn level_mass(&self, jq: i32, jr: i32, a0: f64, n: usize) -> f64 {
        let d = self.params.d;
        let nf = n as f64;
        let big = exp2i(-jq.min(jr));
        let lr = exp2i(-jr);
        let c = nf.sqrt() * lr / big;
        let a = (a0 - c).max(0.0);
        self.amp
            * level_factor(jq, jr, &self.params)
            * (1.0 + c).powf(d)
            * (big / lr).powf(nf)
            * nf
            * unit_ball_volume(n)
            * (1.0 + a).powf(nf - d)
            / (d - nf)
    }
}

/// Computes `(Bt)_Q = Σ_R b_{Q,R} t_R` for every cube `Q` of the window.
///
/// Entries outside the level band or below `eps_cut` are dropped. The omitted mass is bounded with the
/// decay envelope for analytic kernels and summed exactly otherwise. A dropped level of a kernel with no
/// envelope makes the bound infinite. Output entries that are exactly zero are not stored.
pub fn apply(b: &AdKernel, t: &CoeffSequence, window: &Window) -> Result<ApplyResult> {
    window.validate()?;
    t.check_window(window)?;
    let outputs = window.enumerate()?;
    let levels = levels_of(t);
    let n = window.n;
    let trunc = b.truncation;
    let eps = trunc.eps_cut;

    let envelope = b
        .form
        .analytic_envelope()
        .map(|(params, amp, part)| Envelope { params, amp, part })
        .filter(|e| e.params.d > n as f64);

    let rows: Option<HashMap<&DyadicCube, Vec<(&DyadicCube, C64)>>> = match &b.form {
        KernelForm::Explicit(table) => {
            let mut rows: HashMap<&DyadicCube, Vec<(&DyadicCube, C64)>> = HashMap::new();
            for ((q, r), v) in table.iter() {
                rows.entry(q).or_default().push((r, *v));
            }
            for row in rows.values_mut() {
                row.sort_by(|x, y| x.0.cmp(y.0));
            }
            Some(rows)
        }
        _ => None,
    };

    let m = t.m;
    let per_output: Vec<(Vec<C64>, f64, bool)> = outputs
        .par_iter()
        .map(|q| {
            let mut acc = vec![C64::new(0.0, 0.0); m];
            let mut omitted = 0.0;
            let mut unbounded = false;
            let mut take = |e: C64, tr: &[C64], in_band: bool| {
                if !in_band || e.norm() < eps {
                    omitted += e.norm() * linalg::vnorm(tr);
                } else {
                    for (a, x) in acc.iter_mut().zip(tr) {
                        *a += e * x;
                    }
                }
            };
            let lookup = |r: &DyadicCube| {
                levels
                    .iter()
                    .find(|l| l.j == r.j)
                    .and_then(|l| l.index.get(&r.k).map(|&i| &l.values[i]))
            };
            match (&b.form, &rows) {
                (KernelForm::Explicit(_), Some(rows)) => {
                    for (r, e) in rows.get(q).map(|v| v.as_slice()).unwrap_or(&[]) {
                        if let Some(tr) = lookup(r) {
                            take(*e, tr, trunc.in_band(q.j, r.j));
                        }
                    }
                }
                (KernelForm::Diagonal(values), _) => {
                    if let Some(tr) = lookup(q) {
                        take(values.at(q), tr, true);
                    }
                }
                _ => {
                    for level in &levels {
                        if let Some(env) = envelope {
                            if !env.keeps_level(q.j, level.j) || !trunc.in_band(q.j, level.j) {
                                continue;
                            }
                            if eps > 0.0 {
                                let rho0 = env.rho0(q.j, level.j, eps);
                                if rho0 < 1.0 {
                                    continue;
                                }
                                for i in candidates(q, level, (rho0 - 1.0) * exp2i(-q.j.min(level.j))) {
                                    let e = b.form.entry(q, &level.cubes[i])?;
                                    if e.norm() >= eps {
                                        take(e, &level.values[i], true);
                                    }
                                }
                                continue;
                            }
                        } else if !trunc.in_band(q.j, level.j) {
                            // no envelope to bound a dropped level
                            if level.cubes.iter().any(|r| b.form.entry(q, r).map_or(true, |e| e.norm() > 0.0)) {
                                unbounded = true;
                            }
                            continue;
                        }
                        for (r, tr) in level.cubes.iter().zip(&level.values) {
                            take(b.form.entry(q, r)?, tr, true);
                        }
                    }
                }
            }
            Ok((acc, omitted, unbounded))
        })
        .collect::<Result<_>>()?;

    let mut output = CoeffSequence::new(n, m);
    let mut tail = 0.0f64;
    let mut analytic_tail: HashMap<i32, f64> = HashMap::new();
    for (q, (v, omitted, unbounded)) in outputs.iter().zip(per_output) {
        let mut bound = omitted;
        if unbounded {
            bound = f64::INFINITY;
        }
        if let Some(env) = envelope {
            if !trunc.is_none() {
                bound += *analytic_tail.entry(q.j).or_insert_with(|| envelope_tail(&env, q.j, &levels, b, n));
            }
        }
        tail = tail.max(bound);
        if v.iter().any(|z| *z != C64::new(0.0, 0.0)) {
            output.insert(q.clone(), v)?;
        }
    }
    Ok(ApplyResult { output, tail_bound: tail })
}

/// Analytic bound for the mass dropped at output level `jq`.
fn envelope_tail(env: &Envelope, jq: i32, levels: &[Level], b: &AdKernel, n: usize) -> f64 {
    let trunc = b.truncation;
    let mut total = 0.0;
    for level in levels {
        if !env.keeps_level(jq, level.j) || level.max_norm == 0.0 {
            continue;
        }
        let mass = if !trunc.in_band(jq, level.j) {
            env.level_mass(jq, level.j, 0.0, n)
        } else if trunc.eps_cut > 0.0 {
            let rho0 = env.rho0(jq, level.j, trunc.eps_cut);
            env.level_mass(jq, level.j, ((rho0 - 1.0) * (1.0 - 1e-12)).max(0.0), n)
        } else {
            0.0
        };
        total += level.max_norm * mass;
    }
    total
}

/// Indices of support cubes at `level` whose corners may lie within `radius` of `x_Q`.
fn candidates(q: &DyadicCube, level: &Level, radius: f64) -> Vec<usize> {
    let lq = q.edge();
    let lr = exp2i(-level.j);
    let ranges: Vec<(i64, i64)> = q
        .k
        .iter()
        .map(|&k| {
            let x = k as f64 * lq;
            (((x - radius) / lr).floor() as i64 - 1, ((x + radius) / lr).ceil() as i64 + 1)
        })
        .collect();
    let volume: f64 = ranges.iter().map(|(lo, hi)| (hi - lo + 1) as f64).product();
    if volume >= level.cubes.len() as f64 {
        return (0..level.cubes.len())
            .filter(|&i| level.cubes[i].k.iter().zip(&ranges).all(|(k, (lo, hi))| lo <= k && k <= hi))
            .collect();
    }
    let mut out = Vec::new();
    let mut k: Lattice = ranges.iter().map(|r| r.0).collect();
    'outer: loop {
        if let Some(&i) = level.index.get(&k) {
            out.push(i);
        }
        for axis in (0..k.len()).rev() {
            if k[axis] < ranges[axis].1 {
                k[axis] += 1;
                continue 'outer;
            }
            k[axis] = ranges[axis].0;
        }
        break;
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adkernel::{AdParams, Truncation};

    fn seq(entries: &[(i32, i64, f64)]) -> CoeffSequence {
        let mut t = CoeffSequence::new(1, 1);
        for &(j, k, v) in entries {
            t.insert_real(DyadicCube::new(j, &[k]), &[v]).unwrap();
        }
        t
    }

    #[test]
    fn identity_kernel_is_identity() {
        let t = seq(&[(0, 0, 1.5), (1, -3, -2.0)]);
        let w = Window::new(0, 1, 2, 1).unwrap();
        let res = apply(&AdKernel::identity(), &t, &w).unwrap();
        assert_eq!(res.output, t);
        assert_eq!(res.tail_bound, 0.0);
    }

    #[test]
    fn analytic_single_column() {
        let t = seq(&[(0, 0, 1.0)]);
        let w = Window::new(0, 0, 3, 1).unwrap();
        let res = apply(&AdKernel::analytic(AdParams::new(2.0, 1.0, 1.0)), &t, &w).unwrap();
        for k in -3..3 {
            let want = (1.0 + (k as f64).abs()).powi(-2);
            let got = res.output.get(&DyadicCube::new(0, &[k])).unwrap()[0].re;
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn cutoff_tail_covers_the_change() {
        let mut t = CoeffSequence::new(1, 1);
        for j in -1..=1 {
            for k in -6..6 {
                t.insert_real(DyadicCube::new(j, &[k]), &[((k * 7 + j as i64) % 5) as f64 - 2.0]).unwrap();
            }
        }
        let w = Window::new(-1, 1, 6, 1).unwrap();
        let kernel = AdKernel::analytic(AdParams::new(2.5, 1.0, 1.5));
        let full = apply(&kernel, &t, &w).unwrap();
        let cut = kernel.with_truncation(Truncation { level_band: None, eps_cut: 0.05 }).unwrap();
        let res = apply(&cut, &t, &w).unwrap();
        assert!(res.tail_bound.is_finite() && res.tail_bound > 0.0);
        for q in w.enumerate().unwrap() {
            let a = full.output.get(&q).map_or(0.0, |v| v[0].re);
            let b = res.output.get(&q).map_or(0.0, |v| v[0].re);
            assert!((a - b).abs() <= res.tail_bound, "{q}: {a} vs {b}");
        }
    }

    #[test]
    fn dropped_level_without_envelope_is_unbounded() {
        let t = seq(&[(0, 0, 1.0), (2, 0, 1.0)]);
        let w = Window::new(0, 2, 1, 1).unwrap();
        let k = AdKernel::analytic(AdParams::new(2.0, 1.0, 1.0))
            .conjugate(&crate::weights::ReducingFamily::identity(1))
            .with_truncation(Truncation { level_band: Some(1), eps_cut: 0.0 })
            .unwrap();
        assert_eq!(apply(&k, &t, &w).unwrap().tail_bound, f64::INFINITY);
    }

    #[test]
    fn support_outside_window_is_rejected() {
        let t = seq(&[(5, 0, 1.0)]);
        let w = Window::new(0, 1, 1, 1).unwrap();
        assert!(apply(&AdKernel::identity(), &t, &w).is_err());
    }
}
