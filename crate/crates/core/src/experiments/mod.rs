//! Counterexample sequences, growth ladders and series probes for the sharpness of the thresholds.

mod growth;
mod probe;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adkernel::AdParams;
use crate::dyadic::{DyadicCube, Window};
use crate::error::{invalid, Error, Result};
use crate::linalg::C64;
use crate::seqspace::{CoeffSequence, Exponent, Family, SpaceParams, WeightMode};
use crate::weights::ReducingFamily;

pub use growth::{fit_growth, growth_run, GrowthFit, GrowthModel, GrowthRecord, GrowthSeries};
pub use probe::{series_probe, ProbeFamily, ProbeParams, SeriesReport, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SequenceFamily {
    /// `e` at `Q_{0,0}`.
    #[serde(rename = "delta")]
    Delta,
    /// `e` at level-0 cubes with `|x_Q| < N`.
    #[serde(rename = "tN_level0")]
    TnLevel0,
    /// `|Q|^{s/n+1/2} e` at level-`N` cubes with `|x_Q| < 1`.
    #[serde(rename = "level_n")]
    LevelN,
    /// `|Q|^{s/n+1/2} e` for `0 ≤ j ≤ N` and `|x_Q| < 1`.
    #[serde(rename = "small_cubes")]
    SmallCubes,
    /// `|Q|^{s/n+1/2} (1+|x_Q|)^{-(n+1)/p} e` for `0 ≤ j ≤ N` and `|x_Q| < radius`.
    #[serde(rename = "decay")]
    Decay,
    /// `1` at level-0 cubes with `|x_Q| < N`.
    #[serde(rename = "level0_ones")]
    Level0Ones,
    /// `|Q|^{s/n+1/2}` for `|j| ≤ N` and `|x_Q| < radius`.
    #[serde(rename = "power_all")]
    PowerAll,
    /// `A_Q^{-1} e` at level-0 cubes with `|x_Q| < N`.
    #[serde(rename = "weighted_level0")]
    WeightedLevel0,
    /// `|Q|^{s/n+1/2} A_Q^{-1} e` at `x_Q = 0`, `|j| ≤ N`.
    #[serde(rename = "weighted_origin")]
    WeightedOrigin,
    /// `(1+|j_Q|)^{-1} |Q|^{s/n+1/2} A_Q^{-1} e` for `|j| ≤ N` and `|x_Q| < radius`.
    #[serde(rename = "weighted_all")]
    WeightedAll,
}

impl SequenceFamily {
    pub const ALL: [SequenceFamily; 10] = [
        SequenceFamily::Delta,
        SequenceFamily::TnLevel0,
        SequenceFamily::LevelN,
        SequenceFamily::SmallCubes,
        SequenceFamily::Decay,
        SequenceFamily::Level0Ones,
        SequenceFamily::PowerAll,
        SequenceFamily::WeightedLevel0,
        SequenceFamily::WeightedOrigin,
        SequenceFamily::WeightedAll,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            SequenceFamily::Delta => "delta",
            SequenceFamily::TnLevel0 => "tN_level0",
            SequenceFamily::LevelN => "level_n",
            SequenceFamily::SmallCubes => "small_cubes",
            SequenceFamily::Decay => "decay",
            SequenceFamily::Level0Ones => "level0_ones",
            SequenceFamily::PowerAll => "power_all",
            SequenceFamily::WeightedLevel0 => "weighted_level0",
            SequenceFamily::WeightedOrigin => "weighted_origin",
            SequenceFamily::WeightedAll => "weighted_all",
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self, SequenceFamily::WeightedLevel0 | SequenceFamily::WeightedOrigin | SequenceFamily::WeightedAll)
    }

    /// Families whose support is cut by `radius` rather than by `N`.
    pub fn uses_radius(&self) -> bool {
        matches!(self, SequenceFamily::Decay | SequenceFamily::PowerAll | SequenceFamily::WeightedAll)
    }
}

impl fmt::Display for SequenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SequenceFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SequenceFamily::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| Error::Parse(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: SequenceFamily,
    pub space: SpaceParams,
    pub kernel: AdParams,
    pub ladder: Vec<u32>,
    pub n: usize,
    /// Dimension `d` of the power weight `|x|^{-d}`; only the weighted families accept `d > 0`.
    pub d: f64,
    /// Spatial cut `|x_Q| < radius` for the families with unbounded support.
    pub radius: f64,
}

impl ExperimentSpec {
    pub fn new(family: SequenceFamily, space: SpaceParams, kernel: AdParams, ladder: Vec<u32>, n: usize) -> Self {
        ExperimentSpec { family, space, kernel, ladder, n, d: 0.0, radius: 4.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        if self.ladder.is_empty() {
            return Err(invalid("ladder is empty"));
        }
        if self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("ladder must be strictly increasing"));
        }
        if self.ladder[0] == 0 {
            return Err(invalid("ladder entries must be positive"));
        }
        if !(0.0..self.n as f64).contains(&self.d) {
            return Err(invalid(format!("d must lie in [0, n), got {}", self.d)));
        }
        if self.d != 0.0 && !self.family.is_weighted() {
            return Err(invalid(format!("family {} is unweighted but d = {}", self.family, self.d)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid("radius must be positive"));
        }
        Ok(())
    }

    /// The closed-form reducing family of `|x|^{-d}` for weighted families.
    pub fn reducing_family(&self) -> Result<Option<ReducingFamily>> {
        if self.family.is_weighted() {
            Ok(Some(ReducingFamily::closed_form_power(self.d, self.space.p, 1)?))
        } else {
            Ok(None)
        }
    }
}

/// The norm mode of an experiment, given its reducing family.
pub fn mode_for(family: Option<&ReducingFamily>) -> WeightMode<'_> {
    match family {
        Some(f) => WeightMode::Averaging(f),
        None => WeightMode::Unweighted,
    }
}

fn lattice_norm(k: &[i64]) -> f64 {
    k.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}

/// Lattice points with `|k| < bound` (Euclidean), lexicographic.
fn lattice_ball(n: usize, bound: f64) -> Vec<Vec<i64>> {
    let r = bound.ceil() as i64;
    let mut out = Vec::new();
    let mut k = vec![-r; n];
    'outer: loop {
        if lattice_norm(&k) < bound {
            out.push(k.clone());
        }
        for axis in (0..n).rev() {
            if k[axis] < r {
                k[axis] += 1;
                continue 'outer;
            }
            k[axis] = -r;
        }
        break;
    }
    out
}

/// `|Q|^{s/n+1/2} = 2^{-j(s + n/2)}`.
fn smoothness_mass(j: i32, s: f64, n: usize) -> f64 {
    2f64.powf(-(j as f64) * (s + n as f64 / 2.0))
}

/// Builds `t^{(N)}` for the experiment.
pub fn make_sequence(spec: &ExperimentSpec, big_n: u32) -> Result<CoeffSequence> {
    spec.validate()?;
    let n = spec.n;
    let s = spec.space.s;
    let p = spec.space.p;
    let family = spec.reducing_family()?;
    let inv_a = |q: &DyadicCube| -> Result<f64> {
        match &family {
            Some(f) => Ok(1.0 / f.scalar(q)?.expect("closed-form families are scalar")),
            None => Ok(1.0),
        }
    };
    let nn = big_n as i32;
    let mut t = CoeffSequence::new(n, 1);
    let put = |t: &mut CoeffSequence, q: DyadicCube, v: f64| t.insert(q, vec![C64::new(v, 0.0)]);
    let radius_levels = |j: i32| lattice_ball(n, spec.radius * 2f64.powi(j));
    match spec.family {
        SequenceFamily::Delta => put(&mut t, DyadicCube::new(0, &vec![0; n]), 1.0)?,
        SequenceFamily::TnLevel0 | SequenceFamily::Level0Ones => {
            for k in lattice_ball(n, big_n as f64) {
                put(&mut t, DyadicCube::new(0, &k), 1.0)?;
            }
        }
        SequenceFamily::WeightedLevel0 => {
            for k in lattice_ball(n, big_n as f64) {
                let q = DyadicCube::new(0, &k);
                let v = inv_a(&q)?;
                put(&mut t, q, v)?;
            }
        }
        SequenceFamily::LevelN => {
            let v = smoothness_mass(nn, s, n);
            for k in lattice_ball(n, 2f64.powi(nn)) {
                put(&mut t, DyadicCube::new(nn, &k), v)?;
            }
        }
        SequenceFamily::SmallCubes => {
            for j in 0..=nn {
                let v = smoothness_mass(j, s, n);
                for k in lattice_ball(n, 2f64.powi(j)) {
                    put(&mut t, DyadicCube::new(j, &k), v)?;
                }
            }
        }
        SequenceFamily::Decay => {
            for j in 0..=nn {
                for k in radius_levels(j) {
                    let q = DyadicCube::new(j, &k);
                    let v = smoothness_mass(j, s, n) * (1.0 + q.corner_norm()).powf(-(n as f64 + 1.0) / p);
                    put(&mut t, q, v)?;
                }
            }
        }
        SequenceFamily::PowerAll | SequenceFamily::WeightedAll => {
            for j in -nn..=nn {
                for k in radius_levels(j) {
                    let q = DyadicCube::new(j, &k);
                    let mut v = smoothness_mass(j, s, n);
                    if spec.family == SequenceFamily::WeightedAll {
                        v *= inv_a(&q)? / (1.0 + j.unsigned_abs() as f64);
                    }
                    put(&mut t, q, v)?;
                }
            }
        }
        SequenceFamily::WeightedOrigin => {
            for j in -nn..=nn {
                let q = DyadicCube::new(j, &vec![0; n]);
                let v = smoothness_mass(j, s, n) * inv_a(&q)?;
                put(&mut t, q, v)?;
            }
        }
    }
    Ok(t)
}

/// Largest level-0 index where `(1+|k|)^{-D}` still exceeds `1e-8`, capped at 1024.
fn decay_margin(d: f64) -> u64 {
    if d <= 0.0 {
        return 1024;
    }
    (1e8f64.powf(1.0 / d).ceil() as u64).min(1024)
}

/// The window holding the support of `t^{(N)}` and the outputs the kernel is measured on.
///
/// Level-0 families use levels `[-2, 2]` with twice the support radius; the fine-level families use
/// levels `[0, N]`; the two-sided families use `[-N, N]` with a box of the given radius.
pub fn window_for(spec: &ExperimentSpec, big_n: u32) -> Result<Window> {
    let n = spec.n;
    let nn = big_n as i32;
    let box_for = |j_min: i32, r: f64| ((r * 2f64.powi(j_min)).ceil() as u64).max(1);
    match spec.family {
        SequenceFamily::Delta => Window::new(-2, 2, (decay_margin(spec.kernel.d) / 4).max(1), n),
        SequenceFamily::TnLevel0 | SequenceFamily::Level0Ones | SequenceFamily::WeightedLevel0 => {
            Window::new(-2, 2, (big_n as u64).div_ceil(2), n)
        }
        SequenceFamily::LevelN | SequenceFamily::SmallCubes => Window::new(0, nn, 2, n),
        SequenceFamily::Decay => Window::new(0, nn, box_for(0, spec.radius) + 1, n),
        SequenceFamily::PowerAll | SequenceFamily::WeightedAll | SequenceFamily::WeightedOrigin => {
            Window::new(-nn, nn, box_for(-nn, spec.radius), n)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Exact(f64),
    /// `lo ≤ ‖t^{(N)}‖ ≤ hi`.
    Bounds { lo: f64, hi: f64 },
}

impl Reference {
    pub fn contains(&self, v: f64, tol: f64) -> bool {
        match *self {
            Reference::Exact(x) => (v - x).abs() <= tol * x.abs().max(1.0),
            Reference::Bounds { lo, hi } => v >= lo * (1.0 - tol) && v <= hi * (1.0 + tol),
        }
    }
}

/// The value, or two-sided bounds, of `‖t^{(N)}‖` derived from the construction.
pub fn reference_norm(spec: &ExperimentSpec, big_n: u32) -> Result<Reference> {
    spec.validate()?;
    let sp = &spec.space;
    let n = spec.n;
    let nf = n as f64;
    let p = sp.p;
    let none = || Error::NoReference(format!("{} with s={}, tau={}, p={}", spec.family, sp.s, sp.tau, p));
    let count = |r: f64| lattice_ball(n, r).len() as f64;
    match spec.family {
        SequenceFamily::Delta => Ok(Reference::Exact(1.0)),
        SequenceFamily::TnLevel0 | SequenceFamily::Level0Ones if sp.tau == 0.0 => {
            Ok(Reference::Exact(count(big_n as f64).powf(1.0 / p)))
        }
        SequenceFamily::WeightedLevel0 if sp.tau == 1.0 / p => Ok(Reference::Exact(1.0)),
        SequenceFamily::WeightedLevel0 if sp.tau == 0.0 => Ok(Reference::Exact(count(big_n as f64).powf(1.0 / p))),
        SequenceFamily::LevelN if sp.tau == 0.0 => {
            let nn = big_n as i32;
            Ok(Reference::Exact((count(2f64.powi(nn)) * 2f64.powi(-nn * n as i32)).powf(1.0 / p)))
        }
        SequenceFamily::SmallCubes if sp.tau == 0.0 && sp.family == Family::B && sp.q == Exponent::Infinite => {
            let v = (0..=big_n as i32)
                .map(|j| (count(2f64.powi(j)) * 2f64.powi(-j * n as i32)).powf(1.0 / p))
                .fold(0.0, f64::max);
            Ok(Reference::Exact(v))
        }
        SequenceFamily::WeightedOrigin if sp.tau == 1.0 / p && sp.family == Family::B => match sp.q {
            Exponent::Finite(q) => Ok(Reference::Bounds { lo: 1.0, hi: (1.0 - 2f64.powf(-nf * q / p)).powf(-1.0 / q) }),
            Exponent::Infinite => Ok(Reference::Exact(1.0)),
        },
        _ => Err(none()),
    }
}

/// Unweighted space parameters, for building specs in tests and the CLI.
pub fn space(family: Family, s: f64, tau: f64, p: f64, q: Exponent) -> Result<SpaceParams> {
    SpaceParams::new(family, s, tau, p, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspace::norm;

    fn spec(family: SequenceFamily, p: f64, q: Exponent, tau: f64) -> ExperimentSpec {
        let sp = SpaceParams::new(Family::B, 0.0, tau, p, q).unwrap();
        ExperimentSpec::new(family, sp, AdParams::new(2.0, 2.0, 2.0), vec![2, 4], 1)
    }

    #[test]
    fn delta_is_a_single_cube() {
        let t = make_sequence(&spec(SequenceFamily::Delta, 1.0, Exponent::Finite(1.0), 0.0), 7).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(&DyadicCube::new(0, &[0])).unwrap()[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn level0_family_counts() {
        let t = make_sequence(&spec(SequenceFamily::TnLevel0, 1.0, Exponent::Finite(1.0), 0.0), 4).unwrap();
        assert_eq!(t.len(), 7);
        assert!(t.cubes().all(|q| q.j == 0 && q.k[0].abs() < 4));
    }

    #[test]
    fn level_n_values() {
        let t = make_sequence(&spec(SequenceFamily::LevelN, 1.0, Exponent::Finite(1.0), 0.0), 3).unwrap();
        assert_eq!(t.len(), 15);
        for (q, v) in t.iter() {
            assert_eq!(q.j, 3);
            assert!(q.k[0].abs() < 8);
            assert!((v[0].re - 2f64.powf(-1.5)).abs() < 1e-16);
        }
    }

    #[test]
    fn references_match_norms() {
        for (family, p, q, tau, big_n) in [
            (SequenceFamily::Delta, 1.5, Exponent::Finite(2.0), 0.0, 3),
            (SequenceFamily::TnLevel0, 1.0, Exponent::Finite(1.0), 0.0, 5),
            (SequenceFamily::TnLevel0, 2.0, Exponent::Finite(1.0), 0.0, 6),
            (SequenceFamily::LevelN, 1.0, Exponent::Finite(1.0), 0.0, 4),
            (SequenceFamily::SmallCubes, 2.0, Exponent::Infinite, 0.0, 4),
            (SequenceFamily::WeightedLevel0, 2.0, Exponent::Finite(2.0), 0.5, 4),
        ] {
            let mut sp = spec(family, p, q, tau);
            if family.is_weighted() {
                sp.d = 0.5;
            }
            let t = make_sequence(&sp, big_n).unwrap();
            let fam = sp.reducing_family().unwrap();
            let w = window_for(&sp, big_n).unwrap();
            let got = norm(&t, &sp.space, mode_for(fam.as_ref()), &w).unwrap().value;
            let want = reference_norm(&sp, big_n).unwrap();
            assert!(want.contains(got, 1e-12), "{family}: {got} vs {want:?}");
        }
    }

    #[test]
    fn level0_reference_is_exact_count() {
        let r = reference_norm(&spec(SequenceFamily::TnLevel0, 1.0, Exponent::Finite(1.0), 0.0), 9).unwrap();
        assert_eq!(r, Reference::Exact(17.0));
    }

    #[test]
    fn unknown_reference() {
        let r = reference_norm(&spec(SequenceFamily::Decay, 1.0, Exponent::Finite(1.0), 0.0), 3);
        assert!(matches!(r, Err(Error::NoReference(_))));
    }

    #[test]
    fn support_fits_window() {
        for family in SequenceFamily::ALL {
            let mut sp = spec(family, 2.0, Exponent::Finite(2.0), 0.0);
            sp.radius = 3.0;
            for big_n in [1, 3, 5] {
                let t = make_sequence(&sp, big_n).unwrap();
                t.check_window(&window_for(&sp, big_n).unwrap()).unwrap();
            }
        }
    }

    #[test]
    fn validation() {
        let mut sp = spec(SequenceFamily::TnLevel0, 1.0, Exponent::Finite(1.0), 0.0);
        sp.ladder = vec![4, 4];
        assert!(sp.validate().is_err());
        sp.ladder = vec![4, 8];
        sp.d = 0.5;
        assert!(sp.validate().is_err());
        assert_eq!("tN_level0".parse::<SequenceFamily>().unwrap(), SequenceFamily::TnLevel0);
    }
}
