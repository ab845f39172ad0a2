use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{WeightKind, WeightModel};
use crate::dyadic::{exp2i, DyadicCube};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMat, C64};
use super::WeightProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Identity,
    ClosedFormPower,
    ExactScalar,
    ExactP2,
    EllipsoidFit,
}

/// Which construction to use in [`reducing_operator_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Auto,
    ExactScalar,
    ExactP2,
    EllipsoidFit,
}

#[derive(Clone, Debug)]
pub struct ReducingOperator {
    pub matrix: CMat,
    pub provenance: Provenance,
    /// `max_z (|A z|/ρ(z)) / min_z (|A z|/ρ(z))` over the sampled directions (1 for exact strategies).
    pub spread: f64,
    /// Set when the matrix is a multiple of the identity.
    pub scalar: Option<f64>,
}

impl ReducingOperator {
    pub fn scalar(m: usize, c: f64, provenance: Provenance) -> Self {
        ReducingOperator { matrix: linalg::scalar(m, c), provenance, spread: 1.0, scalar: Some(c) }
    }
}

/// Unit directions used by the ellipsoid fit: the basis, pairwise combinations, then random fill up to `8 m^2`.
fn sample_directions(m: usize, seed: u64) -> Vec<Vec<C64>> {
    let target = 8 * m * m;
    let mut dirs = Vec::with_capacity(target);
    let zero = C64::new(0.0, 0.0);
    for a in 0..m {
        let mut v = vec![zero; m];
        v[a] = C64::new(1.0, 0.0);
        dirs.push(v);
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..m {
        for b in a + 1..m {
            for phase in [C64::new(h, 0.0), C64::new(0.0, h)] {
                let mut v = vec![zero; m];
                v[a] = C64::new(h, 0.0);
                v[b] = phase;
                dirs.push(v);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while dirs.len() < target {
        let v: Vec<C64> = (0..m).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let nv = linalg::vnorm(&v);
        if nv > 1e-3 {
            dirs.push(v.into_iter().map(|z| z / nv).collect());
        }
    }
    dirs
}

/// Least-squares Hermitian `G` with `z* G z ≈ ρ(z)^2`, returned as `G^{1/2}`.
fn ellipsoid_fit(w: &WeightModel, q: &DyadicCube, p: f64) -> Result<ReducingOperator> {
    let m = w.m;
    let dirs = sample_directions(m, 0x5eed_0000 ^ m as u64);
    let targets: Vec<f64> = dirs.iter().map(|z| w.rho(q, p, z).map(|r| r * r)).collect::<Result<_>>()?;
    let unknowns = m * m;
    let mut a = nalgebra::DMatrix::<f64>::zeros(dirs.len(), unknowns);
    for (row, z) in dirs.iter().enumerate() {
        let mut col = 0;
        for i in 0..m {
            a[(row, col)] = z[i].norm_sqr();
            col += 1;
        }
        for i in 0..m {
            for j in i + 1..m {
                let c = z[i].conj() * z[j];
                a[(row, col)] = 2.0 * c.re;
                a[(row, col + 1)] = -2.0 * c.im;
                col += 2;
            }
        }
    }
    let b = nalgebra::DVector::from_vec(targets.clone());
    let x = a
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| invalid(format!("ellipsoid least squares failed: {e}")))?;
    let mut g = CMat::zeros(m, m);
    let mut col = 0;
    for i in 0..m {
        g[(i, i)] = C64::new(x[col], 0.0);
        col += 1;
    }
    for i in 0..m {
        for j in i + 1..m {
            g[(i, j)] = C64::new(x[col], x[col + 1]);
            g[(j, i)] = g[(i, j)].conj();
            col += 2;
        }
    }
    let spectrum = linalg::hermitian_spectrum(&g);
    if spectrum[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite { spectrum });
    }
    let root = linalg::hermitian_power(&g, 0.5)?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (z, t) in dirs.iter().zip(&targets) {
        let ratio = linalg::vnorm(&linalg::matvec(&root, z)) / t.sqrt();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    let scalar = if m == 1 { Some(root[(0, 0)].re) } else { None };
    Ok(ReducingOperator { matrix: root, provenance: Provenance::EllipsoidFit, spread: hi / lo, scalar })
}

pub fn reducing_operator(w: &WeightModel, q: &DyadicCube, p: f64) -> Result<ReducingOperator> {
    reducing_operator_with(w, q, p, Strategy::Auto)
}

/// A reducing operator of order `p` for `W` on `Q`.
///
/// `Auto` picks the exact scalar construction for scalar weights, `(⨍_Q W)^{1/2}` when `p = 2`,
/// and the ellipsoid fit otherwise.
pub fn reducing_operator_with(w: &WeightModel, q: &DyadicCube, p: f64, strategy: Strategy) -> Result<ReducingOperator> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("p must be positive and finite, got {p}")));
    }
    if q.dim() != w.n {
        return Err(Error::DimensionMismatch { expected: w.n, found: q.dim() });
    }
    let chosen = match strategy {
        Strategy::Auto if w.is_identity() => return Ok(ReducingOperator::scalar(w.m, 1.0, Provenance::Identity)),
        Strategy::Auto if w.is_scalar() => Strategy::ExactScalar,
        Strategy::Auto if p == 2.0 => Strategy::ExactP2,
        Strategy::Auto => Strategy::EllipsoidFit,
        s => s,
    };
    match chosen {
        Strategy::ExactScalar => {
            if !w.is_scalar() {
                return Err(invalid("exact scalar strategy needs a scalar weight"));
            }
            let mut e = vec![C64::new(0.0, 0.0); w.m];
            e[0] = C64::new(1.0, 0.0);
            let c = w.rho(q, p, &e)?;
            Ok(ReducingOperator::scalar(w.m, c, Provenance::ExactScalar))
        }
        Strategy::ExactP2 => {
            if p != 2.0 {
                return Err(invalid("the averaged square root is exact only for p = 2"));
            }
            let avg = w.average(q)?;
            let matrix = linalg::hermitian_power(&avg, 0.5)?;
            let scalar = if w.is_scalar() { Some(matrix[(0, 0)].re) } else { None };
            Ok(ReducingOperator { matrix, provenance: Provenance::ExactP2, spread: 1.0, scalar })
        }
        Strategy::EllipsoidFit => ellipsoid_fit(w, q, p),
        Strategy::Auto => unreachable!(),
    }
}

/// `2^{jd/p} (1+|k|)^{-d/p}`.
pub fn closed_form_power_scalar(d: f64, p: f64, q: &DyadicCube) -> f64 {
    let knorm = q.k.iter().map(|&k| (k as f64).powi(2)).sum::<f64>().sqrt();
    exp2i(q.j).powf(d / p) * (1.0 + knorm).powf(-d / p)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosedFormComparison {
    pub d: f64,
    pub p: f64,
    /// Smallest and largest `A_Q^{num} / A_Q^{closed}` over the cubes.
    pub lo: f64,
    pub hi: f64,
    pub spread: f64,
    pub argmin: DyadicCube,
    pub argmax: DyadicCube,
    pub cubes: usize,
}

/// Ratios of the quadrature-built reducing operators of the scalar power weight `w` to the closed form.
pub fn closed_form_comparison(w: &WeightModel, p: f64, cubes: &[DyadicCube]) -> Result<ClosedFormComparison> {
    let d = match w.kind {
        WeightKind::ScalarPower { d } => d,
        _ => return Err(invalid("closed-form comparison needs a scalar power weight")),
    };
    if cubes.is_empty() {
        return Err(invalid("no cubes to compare"));
    }
    let ratios: Vec<f64> = cubes
        .par_iter()
        .map(|q| {
            let a = reducing_operator_with(w, q, p, Strategy::ExactScalar)?;
            Ok(a.scalar.expect("scalar strategy") / closed_form_power_scalar(d, p, q))
        })
        .collect::<Result<_>>()?;
    let (mut imin, mut imax) = (0, 0);
    for (i, r) in ratios.iter().enumerate() {
        if *r < ratios[imin] {
            imin = i;
        }
        if *r > ratios[imax] {
            imax = i;
        }
    }
    Ok(ClosedFormComparison {
        d,
        p,
        lo: ratios[imin],
        hi: ratios[imax],
        spread: ratios[imax] / ratios[imin],
        argmin: cubes[imin].clone(),
        argmax: cubes[imax].clone(),
        cubes: cubes.len(),
    })
}

/// Cubes with level in `[j_lo, j_hi]` and `|k|_∞ ≤ k_max`.
pub fn lattice_cubes(n: usize, j_lo: i32, j_hi: i32, k_max: i64) -> Vec<DyadicCube> {
    let mut out = Vec::new();
    let side = (2 * k_max + 1) as usize;
    for j in j_lo..=j_hi {
        for idx in 0..side.pow(n as u32) {
            let mut rest = idx;
            let k: Vec<i64> = (0..n)
                .map(|_| {
                    let c = (rest % side) as i64 - k_max;
                    rest /= side;
                    c
                })
                .collect();
            out.push(DyadicCube::new(j, &k));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub enum FamilySource {
    Identity,
    ClosedFormPower { d: f64, p: f64 },
    Table(Arc<HashMap<DyadicCube, ReducingOperator>>),
}

/// A map `Q -> A_Q`, either analytic or tabulated over a finite set of cubes.
#[derive(Clone, Debug)]
pub struct ReducingFamily {
    pub m: usize,
    pub source: FamilySource,
}

impl ReducingFamily {
    pub fn identity(m: usize) -> Self {
        ReducingFamily { m, source: FamilySource::Identity }
    }

    pub fn closed_form_power(d: f64, p: f64, m: usize) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) || !d.is_finite() {
            return Err(invalid("closed-form family needs finite d and positive p"));
        }
        Ok(ReducingFamily { m, source: FamilySource::ClosedFormPower { d, p } })
    }

    pub fn from_table(m: usize, table: HashMap<DyadicCube, ReducingOperator>) -> Self {
        ReducingFamily { m, source: FamilySource::Table(Arc::new(table)) }
    }

    /// Tabulates reducing operators of `W` on `cubes` in parallel.
    pub fn from_weight(w: &WeightModel, p: f64, cubes: &[DyadicCube], strategy: Strategy) -> Result<Self> {
        let ops: Vec<(DyadicCube, ReducingOperator)> = cubes
            .par_iter()
            .map(|q| reducing_operator_with(w, q, p, strategy).map(|op| (q.clone(), op)))
            .collect::<Result<_>>()?;
        Ok(Self::from_table(w.m, ops.into_iter().collect()))
    }

    pub fn provenance(&self) -> Option<Provenance> {
        match &self.source {
            FamilySource::Identity => Some(Provenance::Identity),
            FamilySource::ClosedFormPower { .. } => Some(Provenance::ClosedFormPower),
            FamilySource::Table(t) => t.values().next().map(|op| op.provenance),
        }
    }

    fn entry(&self, q: &DyadicCube) -> Result<&ReducingOperator> {
        match &self.source {
            FamilySource::Table(t) => t.get(q).ok_or_else(|| Error::MissingReducingOperator(q.clone())),
            _ => unreachable!(),
        }
    }

    /// `Some(c)` when `A_Q = c I`.
    pub fn scalar(&self, q: &DyadicCube) -> Result<Option<f64>> {
        Ok(match &self.source {
            FamilySource::Identity => Some(1.0),
            FamilySource::ClosedFormPower { d, p } => Some(closed_form_power_scalar(*d, *p, q)),
            FamilySource::Table(_) => self.entry(q)?.scalar,
        })
    }

    pub fn matrix(&self, q: &DyadicCube) -> Result<CMat> {
        if let FamilySource::Table(_) = &self.source {
            return Ok(self.entry(q)?.matrix.clone());
        }
        Ok(linalg::scalar(self.m, self.scalar(q)?.expect("analytic families are scalar")))
    }

    /// `|A_Q v|`.
    pub fn norm_apply(&self, q: &DyadicCube, v: &[C64]) -> Result<f64> {
        if let Some(c) = self.scalar(q)? {
            return Ok(c * linalg::vnorm(v));
        }
        Ok(linalg::vnorm(&linalg::matvec(&self.entry(q)?.matrix, v)))
    }

    pub fn apply(&self, q: &DyadicCube, v: &[C64]) -> Result<Vec<C64>> {
        if let Some(c) = self.scalar(q)? {
            return Ok(v.iter().map(|z| z * c).collect());
        }
        Ok(linalg::matvec(&self.entry(q)?.matrix, v))
    }

    /// `A_Q^{-1} v`.
    pub fn inverse_apply(&self, q: &DyadicCube, v: &[C64]) -> Result<Vec<C64>> {
        if let Some(c) = self.scalar(q)? {
            return Ok(v.iter().map(|z| z / c).collect());
        }
        Ok(linalg::matvec(&linalg::inverse(&self.entry(q)?.matrix)?, v))
    }

    /// Spectral norm `‖A_Q A_R^{-1}‖`.
    pub fn ratio_norm(&self, q: &DyadicCube, r: &DyadicCube) -> Result<f64> {
        if let (Some(a), Some(b)) = (self.scalar(q)?, self.scalar(r)?) {
            return Ok(a / b);
        }
        let prod = self.matrix(q)? * linalg::inverse(&self.matrix(r)?)?;
        Ok(linalg::spectral_norm(&prod))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma22Report {
    /// Maximum of LHS/RHS over the pairs.
    pub c: f64,
    pub attaining: (DyadicCube, DyadicCube),
    pub lhs: f64,
    pub rhs: f64,
    pub pairs: usize,
    /// Pairs whose ratio exceeds `c`; zero by construction of the maximum.
    pub violations: usize,
}

/// Right-hand envelope `max{(l_R/l_Q)^{d/p}, (l_Q/l_R)^{d̃/p'}} (1 + |c_Q - c_R|/(l_Q ∨ l_R))^Δ`.
pub fn lemma22_envelope(profile: &WeightProfile, q: &DyadicCube, r: &DyadicCube) -> f64 {
    let (lq, lr) = (q.edge(), r.edge());
    let first = (lr / lq).powf(profile.d / profile.p);
    let second = (lq / lr).powf(profile.dual_term());
    let cq = q.center();
    let cr = r.center();
    let dist = cq.iter().zip(&cr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    first.max(second) * (1.0 + dist / lq.max(lr)).powf(profile.delta())
}

/// Fits the constant of the sharp estimate for `‖A_Q A_R^{-1}‖` over the given pairs.
pub fn lemma22_check(
    family: &ReducingFamily,
    profile: &WeightProfile,
    pairs: &[(DyadicCube, DyadicCube)],
) -> Result<Lemma22Report> {
    if pairs.is_empty() {
        return Err(invalid("lemma22_check needs at least one pair"));
    }
    let rows: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|(q, r)| Ok((family.ratio_norm(q, r)?, lemma22_envelope(profile, q, r))))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, (l, r)) in rows.iter().enumerate() {
        if l / r > rows[best].0 / rows[best].1 {
            best = i;
        }
    }
    let c = rows[best].0 / rows[best].1;
    let violations = rows.iter().filter(|(l, r)| l / r > c).count();
    Ok(Lemma22Report {
        c,
        attaining: pairs[best].clone(),
        lhs: rows[best].0,
        rhs: rows[best].1,
        pairs: pairs.len(),
        violations,
    })
}

impl WeightModel {
    /// Power exponent of a scalar power weight, `0` for the identity.
    pub fn scalar_power_exponent(&self) -> Option<f64> {
        match self.kind {
            WeightKind::Identity => Some(0.0),
            WeightKind::ScalarPower { d } => Some(d),
            _ => None,
        }
    }
}
