//! Dyadic cubes, truncation windows and the shifted dyadic systems.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};

/// Lattice index of a cube. Three inline slots cover the dimensions used in practice.
pub type Lattice = SmallVec<[i64; 3]>;

/// Default cap on the number of cubes a window may enumerate.
pub const DEFAULT_CUBE_LIMIT: u128 = 50_000_000;

/// The half-open cube `2^{-j}([0,1)^n + k)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub j: i32,
    pub k: Lattice,
}

#[inline]
pub fn exp2i(j: i32) -> f64 {
    2f64.powi(j)
}

impl DyadicCube {
    pub fn new(j: i32, k: &[i64]) -> Self {
        DyadicCube { j, k: k.iter().copied().collect() }
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    /// Edge length `2^{-j}`.
    #[inline]
    pub fn edge(&self) -> f64 {
        exp2i(-self.j)
    }

    /// Lebesgue measure `2^{-jn}`.
    #[inline]
    pub fn volume(&self) -> f64 {
        exp2i(-self.j * self.dim() as i32)
    }

    /// Lower-left corner `2^{-j} k`, used as the anchor `x_Q`.
    pub fn corner(&self) -> Vec<f64> {
        let l = self.edge();
        self.k.iter().map(|&k| k as f64 * l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let l = self.edge();
        self.k.iter().map(|&k| (k as f64 + 0.5) * l).collect()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        cube_at(self.j, x) == *self
    }

    /// True when `other` is a (non-strict) dyadic descendant of `self`.
    pub fn contains_cube(&self, other: &DyadicCube) -> bool {
        other.j >= self.j && other.ancestor(self.j) == *self
    }

    pub fn parent(&self) -> DyadicCube {
        self.ancestor(self.j - 1)
    }

    /// The unique cube at level `level <= j` that contains `self`.
    pub fn ancestor(&self, level: i32) -> DyadicCube {
        assert!(level <= self.j, "ancestor level must not exceed the cube level");
        let shift = (self.j - level) as u32;
        DyadicCube {
            j: level,
            k: self.k.iter().map(|&k| if shift >= 63 { if k < 0 { -1 } else { 0 } } else { k >> shift }).collect(),
        }
    }

    /// The `2^n` children in lexicographic order.
    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| DyadicCube {
                j: self.j + 1,
                k: (0..n).map(|i| 2 * self.k[i] + ((mask >> (n - 1 - i)) & 1) as i64).collect(),
            })
            .collect()
    }

    /// `|x_Q|`, Euclidean norm of the corner.
    pub fn corner_norm(&self) -> f64 {
        self.edge() * self.k.iter().map(|&k| (k as f64).powi(2)).sum::<f64>().sqrt()
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q(j={}, k={:?})", self.j, self.k.as_slice())
    }
}

/// The level-`j` cube containing `x`.
pub fn cube_at(j: i32, x: &[f64]) -> DyadicCube {
    let scale = exp2i(j);
    DyadicCube { j, k: x.iter().map(|&xi| (xi * scale).floor() as i64).collect() }
}

/// `1 + |x_Q - x_R| / max(l(Q), l(R))`.
pub fn distance_factor(q: &DyadicCube, r: &DyadicCube) -> f64 {
    debug_assert_eq!(q.dim(), r.dim());
    let (lq, lr) = (q.edge(), r.edge());
    let dist = q
        .k
        .iter()
        .zip(r.k.iter())
        .map(|(&a, &b)| (a as f64 * lq - b as f64 * lr).powi(2))
        .sum::<f64>()
        .sqrt();
    1.0 + dist / lq.max(lr)
}

/// Levels `j_min..=j_max` over the box `[-K 2^{-j_min}, K 2^{-j_min})^n`.
#[derive(Clone, Debug, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub j_min: i32,
    pub j_max: i32,
    pub k: u64,
    pub n: usize,
}

impl Window {
    pub fn new(j_min: i32, j_max: i32, k: u64, n: usize) -> Result<Self> {
        let w = Window { j_min, j_max, k, n };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_min > self.j_max {
            return Err(Error::EmptyWindow(format!("j_min {} > j_max {}", self.j_min, self.j_max)));
        }
        if self.k == 0 || self.n == 0 {
            return Err(Error::EmptyWindow("K and n must be positive".into()));
        }
        if self.j_max - self.j_min > 60 {
            return Err(invalid("window spans more than 60 levels"));
        }
        Ok(())
    }

    /// Half-width of the lattice range at level `j`, in level-`j` units.
    pub fn half_range(&self, j: i32) -> i64 {
        (self.k as i64) << (j - self.j_min)
    }

    /// Spatial half-width of the box.
    pub fn box_half_width(&self) -> f64 {
        self.k as f64 * exp2i(-self.j_min)
    }

    pub fn level_count(&self, j: i32) -> u128 {
        (2 * self.half_range(j) as u128).pow(self.n as u32)
    }

    pub fn count(&self) -> u128 {
        (self.j_min..=self.j_max).map(|j| self.level_count(j)).sum()
    }

    pub fn contains(&self, q: &DyadicCube) -> bool {
        if q.j < self.j_min || q.j > self.j_max || q.dim() != self.n {
            return false;
        }
        let h = self.half_range(q.j);
        q.k.iter().all(|&k| -h <= k && k < h)
    }

    /// True when `q` sits on the outer levels or lattice faces of the window.
    pub fn touches_boundary(&self, q: &DyadicCube) -> bool {
        if q.j == self.j_min || q.j == self.j_max {
            return true;
        }
        let h = self.half_range(q.j);
        q.k.iter().any(|&k| k == -h || k == h - 1)
    }

    /// Cubes of one level in lexicographic order.
    pub fn level_cubes(&self, j: i32) -> Vec<DyadicCube> {
        let h = self.half_range(j);
        lattice_box(self.n, -h, h).into_iter().map(|k| DyadicCube { j, k }).collect()
    }

    pub fn enumerate(&self) -> Result<Vec<DyadicCube>> {
        self.enumerate_with_limit(DEFAULT_CUBE_LIMIT)
    }

    /// Level-major, then lexicographic in `k`.
    pub fn enumerate_with_limit(&self, limit: u128) -> Result<Vec<DyadicCube>> {
        self.validate()?;
        let count = self.count();
        if count > limit {
            return Err(Error::WindowTooLarge { count, limit });
        }
        let mut out = Vec::with_capacity(count as usize);
        for j in self.j_min..=self.j_max {
            out.extend(self.level_cubes(j));
        }
        Ok(out)
    }

    /// A cube drawn with a uniform level and then a uniform lattice index.
    pub fn random_cube<R: Rng + ?Sized>(&self, rng: &mut R) -> DyadicCube {
        let j = rng.gen_range(self.j_min..=self.j_max);
        let h = self.half_range(j);
        DyadicCube { j, k: (0..self.n).map(|_| rng.gen_range(-h..h)).collect() }
    }

    /// The window with the spatial box doubled (one more coarse level keeps `K` fixed).
    pub fn doubled(&self) -> Window {
        Window { k: self.k * 2, ..self.clone() }
    }
}

/// All lattice vectors in `[lo, hi)^n` in lexicographic order.
pub fn lattice_box(n: usize, lo: i64, hi: i64) -> Vec<Lattice> {
    let mut out = Vec::new();
    if hi <= lo {
        return out;
    }
    let mut cur: Lattice = SmallVec::from_elem(lo, n);
    loop {
        out.push(cur.clone());
        let mut axis = n;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            cur[axis] += 1;
            if cur[axis] < hi {
                break;
            }
            cur[axis] = lo;
        }
    }
}

/// Axis-parallel cube with arbitrary real corner, as accepted by [`shifted_cover`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisCube {
    pub corner: Vec<f64>,
    pub edge: f64,
}

impl AxisCube {
    pub fn contains(&self, other: &AxisCube) -> bool {
        self.corner
            .iter()
            .zip(&other.corner)
            .all(|(&a, &b)| a <= b && b + other.edge <= a + self.edge)
    }
}

/// Shift `gamma = thirds / 3` of one of the `3^n` systems.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShiftedSystem {
    pub thirds: Vec<u8>,
}

impl ShiftedSystem {
    pub fn gamma(&self) -> Vec<f64> {
        self.thirds.iter().map(|&t| t as f64 / 3.0).collect()
    }

    /// The cube `2^{-j}([0,1)^n + k + (-1)^j gamma)`.
    pub fn cube(&self, j: i32, k: &[i64]) -> AxisCube {
        let l = exp2i(-j);
        let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        AxisCube {
            corner: k
                .iter()
                .zip(&self.thirds)
                .map(|(&ki, &t)| l * (ki as f64 + sign * t as f64 / 3.0))
                .collect(),
            edge: l,
        }
    }
}

/// A cube of a shifted system together with its index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedCube {
    pub system: ShiftedSystem,
    pub j: i32,
    pub k: Vec<i64>,
    pub cube: AxisCube,
}

/// Finds a shifted-system cube `S` with `Q ⊂ S` and `l(S) ∈ (3/2 l(Q), 3 l(Q)]`.
///
/// Per axis the shift with the largest containment slack is chosen, so the answer is
/// deterministic even where several systems qualify.
pub fn shifted_cover(q: &AxisCube) -> Result<ShiftedCube> {
    if !(q.edge > 0.0 && q.edge.is_finite()) {
        return Err(invalid(format!("cube edge must be positive and finite, got {}", q.edge)));
    }
    if q.corner.is_empty() || q.corner.iter().any(|c| !c.is_finite()) {
        return Err(invalid("cube corner must be a finite nonempty vector"));
    }
    let ell = q.edge;
    let mut j = (-(3.0 * ell).log2()).ceil() as i32;
    // Correct for rounding in log2 so that the window condition holds exactly.
    while exp2i(-j) > 3.0 * ell {
        j += 1;
    }
    while exp2i(-j) <= 1.5 * ell {
        j -= 1;
    }
    let l = exp2i(-j);
    let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };

    let mut thirds = Vec::with_capacity(q.corner.len());
    let mut ks = Vec::with_capacity(q.corner.len());
    for &a in &q.corner {
        let mut best: Option<(f64, u8, i64)> = None;
        for t in 0u8..3 {
            let shift = sign * t as f64 / 3.0;
            let k = (a / l - shift).floor() as i64;
            let left = l * (k as f64 + shift);
            let right = left + l;
            let slack = (a - left).min(right - (a + ell));
            if slack >= 0.0 && best.map_or(true, |(s, _, _)| slack > s) {
                best = Some((slack, t, k));
            }
        }
        let (_, t, k) = best.ok_or_else(|| invalid("no shifted system contains the cube"))?;
        thirds.push(t);
        ks.push(k);
    }
    let system = ShiftedSystem { thirds };
    let cube = system.cube(j, &ks);
    Ok(ShiftedCube { system, j, k: ks, cube })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_at_examples() {
        assert_eq!(cube_at(0, &[0.5]), DyadicCube::new(0, &[0]));
        assert_eq!(cube_at(1, &[0.75]), DyadicCube::new(1, &[1]));
        assert_eq!(cube_at(0, &[-0.1, 2.3]), DyadicCube::new(0, &[-1, 2]));
    }

    #[test]
    fn boundary_points_go_to_the_plus_side() {
        assert_eq!(cube_at(0, &[1.0]), DyadicCube::new(0, &[1]));
        assert_eq!(cube_at(2, &[-0.25]), DyadicCube::new(2, &[-1]));
    }

    #[test]
    fn geometry() {
        let q = DyadicCube::new(3, &[5, -2]);
        assert_eq!(q.edge(), 0.125);
        assert_eq!(q.volume(), 1.0 / 64.0);
        assert_eq!(q.corner(), vec![0.625, -0.25]);
        assert_eq!(q.center(), vec![0.6875, -0.1875]);
        assert_eq!(DyadicCube::new(-2, &[1]).edge(), 4.0);
    }

    #[test]
    fn parent_and_children() {
        let q = DyadicCube::new(-1, &[-3, 4]);
        let kids = q.children();
        assert_eq!(kids.len(), 4);
        for c in &kids {
            assert_eq!(c.parent(), q);
            assert!(q.contains_cube(c));
        }
        assert_eq!(kids[1], DyadicCube::new(0, &[-6, 9]));
        assert!(!kids[0].contains_cube(&q));
    }

    #[test]
    fn distance_factor_examples() {
        let q = DyadicCube::new(0, &[0]);
        assert_eq!(distance_factor(&q, &q), 1.0);
        assert_eq!(distance_factor(&q, &DyadicCube::new(0, &[3])), 4.0);
        assert_eq!(distance_factor(&DyadicCube::new(1, &[0]), &DyadicCube::new(0, &[2])), 3.0);
    }

    #[test]
    fn enumerate_examples() {
        let w = Window::new(0, 0, 1, 1).unwrap();
        assert_eq!(w.enumerate().unwrap(), vec![DyadicCube::new(0, &[-1]), DyadicCube::new(0, &[0])]);
        assert_eq!(Window::new(0, 1, 1, 1).unwrap().enumerate().unwrap().len(), 6);
        assert_eq!(Window::new(0, 0, 2, 2).unwrap().enumerate().unwrap().len(), 16);
    }

    #[test]
    fn enumerate_order_is_sorted() {
        let cubes = Window::new(-1, 1, 1, 2).unwrap().enumerate().unwrap();
        let mut sorted = cubes.clone();
        sorted.sort();
        assert_eq!(cubes, sorted);
    }

    #[test]
    fn window_guards() {
        assert!(Window::new(1, 0, 1, 1).is_err());
        let w = Window::new(0, 20, 4, 2).unwrap();
        assert!(matches!(w.enumerate_with_limit(1000), Err(Error::WindowTooLarge { .. })));
    }

    #[test]
    fn shifted_cover_examples() {
        let s = shifted_cover(&AxisCube { corner: vec![0.7], edge: 0.5 }).unwrap();
        assert_eq!(s.system.thirds, vec![1]);
        assert!((s.cube.corner[0] - 1.0 / 3.0).abs() < 1e-15 && s.cube.edge == 1.0);

        let s = shifted_cover(&AxisCube { corner: vec![-0.2], edge: 0.25 }).unwrap();
        assert_eq!(s.system.thirds, vec![2]);
        assert!((s.cube.corner[0] + 1.0 / 3.0).abs() < 1e-15 && s.cube.edge == 0.5);

        let s = shifted_cover(&AxisCube { corner: vec![0.1], edge: 0.5 }).unwrap();
        assert_eq!(s.system.thirds, vec![0]);
        assert_eq!(s.cube, AxisCube { corner: vec![0.0], edge: 1.0 });
    }

    #[test]
    fn shifted_cover_rejects_bad_edge() {
        assert!(shifted_cover(&AxisCube { corner: vec![0.0], edge: 0.0 }).is_err());
        assert!(shifted_cover(&AxisCube { corner: vec![0.0], edge: f64::NAN }).is_err());
    }

    #[test]
    fn shifted_systems_partition_a_level() {
        for t in 0..3u8 {
            let sys = ShiftedSystem { thirds: vec![t] };
            for j in [-1, 0, 3] {
                for k in -4..4 {
                    let a = sys.cube(j, &[k]);
                    let b = sys.cube(j, &[k + 1]);
                    assert!((a.corner[0] + a.edge - b.corner[0]).abs() < 1e-12 * a.edge.max(1.0));
                }
            }
        }
    }
}
