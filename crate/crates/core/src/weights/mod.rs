//! Matrix weights: evaluation of `W^{1/p}`, cube averages, A_p quantities and reducing operators.

mod ap;
mod profile;
mod reducing;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicCube;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::quadrature::{cube_rule, CubeRule, GaussLegendre, QuadPolicy};

pub use ap::{ap_constant, ap_dimension_fit, ApDimensionFit, ApEstimate};
pub use profile::WeightProfile;
pub use reducing::{
    closed_form_comparison, closed_form_power_scalar, lattice_cubes, lemma22_check, lemma22_envelope, reducing_operator, reducing_operator_with, ClosedFormComparison, FamilySource, Lemma22Report,
    Provenance, ReducingFamily, ReducingOperator, Strategy,
};

/// Nearest-neighbour table of sampled weight values.
#[derive(Clone, Debug)]
pub struct GridTable {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<CMat>,
}

#[derive(Clone, Debug)]
pub enum WeightKind {
    Identity,
    /// `|x|^{-d} I`.
    ScalarPower { d: f64 },
    /// `diag(|x|^{-d_1}, ..., |x|^{-d_m})`.
    DiagonalPower { ds: Vec<f64> },
    Grid(GridTable),
}

#[derive(Clone, Debug)]
pub struct WeightModel {
    pub kind: WeightKind,
    pub m: usize,
    pub n: usize,
    pub quad: QuadPolicy,
    gl: GaussLegendre,
}

#[derive(Deserialize, Serialize)]
struct GridLine {
    x: Vec<f64>,
    w: Vec<[f64; 2]>,
}

impl WeightModel {
    pub fn new(kind: WeightKind, m: usize, n: usize, quad: QuadPolicy) -> Result<Self> {
        quad.validate()?;
        if m == 0 || n == 0 {
            return Err(invalid("weight dimensions m and n must be positive"));
        }
        match &kind {
            WeightKind::ScalarPower { d } if !d.is_finite() => return Err(invalid("power exponent must be finite")),
            WeightKind::DiagonalPower { ds } => {
                if ds.len() != m {
                    return Err(Error::DimensionMismatch { expected: m, found: ds.len() });
                }
                if ds.iter().any(|d| !d.is_finite()) {
                    return Err(invalid("power exponents must be finite"));
                }
            }
            WeightKind::Grid(table) => validate_grid(table, m, n)?,
            _ => {}
        }
        Ok(WeightModel { kind, m, n, quad, gl: GaussLegendre::new(quad.points) })
    }

    pub fn identity(m: usize, n: usize) -> Self {
        Self::new(WeightKind::Identity, m, n, QuadPolicy::default()).expect("identity weight is valid")
    }

    pub fn scalar_power(d: f64, m: usize, n: usize) -> Result<Self> {
        Self::new(WeightKind::ScalarPower { d }, m, n, QuadPolicy::default())
    }

    pub fn diagonal_power(ds: &[f64], n: usize) -> Result<Self> {
        Self::new(WeightKind::DiagonalPower { ds: ds.to_vec() }, ds.len(), n, QuadPolicy::default())
    }

    pub fn with_quad(&self, quad: QuadPolicy) -> Result<Self> {
        Self::new(self.kind.clone(), self.m, self.n, quad)
    }

    /// Parses `ident`, `power:d=<f>`, `dpower:d=<f,...>` or `grid:<path>`.
    /// `m` applies to `ident` and `power`; the other kinds carry their own size.
    pub fn parse(spec: &str, n: usize, m: usize) -> Result<Self> {
        let spec = spec.trim();
        if spec == "ident" {
            return Ok(Self::identity(m, n));
        }
        if let Some(rest) = spec.strip_prefix("power:") {
            let d = parse_d_list(rest)?;
            if d.len() != 1 {
                return Err(Error::Parse(format!("power weight takes one exponent, got {}", d.len())));
            }
            return Self::scalar_power(d[0], m, n);
        }
        if let Some(rest) = spec.strip_prefix("dpower:") {
            let ds = parse_d_list(rest)?;
            return Self::diagonal_power(&ds, n);
        }
        if let Some(path) = spec.strip_prefix("grid:") {
            let table = load_grid(Path::new(path))?;
            let m = table.values.first().map(|v| v.nrows()).unwrap_or(0);
            return Self::new(WeightKind::Grid(table), m, n, QuadPolicy::default());
        }
        Err(Error::Parse(format!("unknown weight spec '{spec}'")))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, WeightKind::Identity)
    }

    /// Scalar multiples of the identity.
    pub fn is_scalar(&self) -> bool {
        matches!(self.kind, WeightKind::Identity | WeightKind::ScalarPower { .. })
    }

    /// The point where power weights blow up or vanish.
    pub fn singular_point(&self) -> Option<Vec<f64>> {
        match &self.kind {
            WeightKind::ScalarPower { d } if *d != 0.0 => Some(vec![0.0; self.n]),
            WeightKind::DiagonalPower { ds } if ds.iter().any(|&d| d != 0.0) => Some(vec![0.0; self.n]),
            _ => None,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        if self.singular_point().is_some() && x.iter().all(|&xi| xi == 0.0) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Diagonal entries of `W(x)^{power}` for diagonal kinds; `None` for grids.
    pub fn diag_power(&self, x: &[f64], power: f64) -> Result<Option<Vec<f64>>> {
        self.check_point(x)?;
        let r = || x.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(match &self.kind {
            WeightKind::Identity => Some(vec![1.0; self.m]),
            WeightKind::ScalarPower { d } => Some(vec![r().powf(-d * power); self.m]),
            WeightKind::DiagonalPower { ds } => {
                let rx = r();
                Some(ds.iter().map(|d| rx.powf(-d * power)).collect())
            }
            WeightKind::Grid(_) => None,
        })
    }

    /// `W(x)`.
    pub fn weight(&self, x: &[f64]) -> Result<CMat> {
        if let Some(diag) = self.diag_power(x, 1.0)? {
            return Ok(linalg::diagonal(&diag));
        }
        match &self.kind {
            WeightKind::Grid(table) => Ok(table.values[nearest(table, x)].clone()),
            _ => unreachable!(),
        }
    }

    /// `W(x)^{1/p}` by Hermitian eigendecomposition.
    pub fn root(&self, x: &[f64], p: f64) -> Result<CMat> {
        self.power(x, 1.0 / p)
    }

    /// `W(x)^{power}`.
    pub fn power(&self, x: &[f64], power: f64) -> Result<CMat> {
        if let Some(diag) = self.diag_power(x, power)? {
            return Ok(linalg::diagonal(&diag));
        }
        linalg::hermitian_power(&self.weight(x)?, power)
    }

    /// `|W^{1/p}(x) z|`.
    pub fn root_norm(&self, x: &[f64], p: f64, z: &[C64]) -> Result<f64> {
        if let Some(diag) = self.diag_power(x, 1.0 / p)? {
            return Ok(diag.iter().zip(z).map(|(w, zi)| w * w * zi.norm_sqr()).sum::<f64>().sqrt());
        }
        Ok(linalg::vnorm(&linalg::matvec(&self.root(x, p)?, z)))
    }

    /// Averaging rule on `Q`, refined toward the singular point when it meets the closure.
    pub fn rule(&self, q: &DyadicCube) -> CubeRule {
        self.rule_on(&q.corner(), q.edge())
    }

    pub fn rule_on(&self, corner: &[f64], edge: f64) -> CubeRule {
        let sing = self.singular_point();
        cube_rule(&self.gl, corner, edge, sing.as_deref(), self.quad.depth)
    }

    /// `ρ_Q(z) = (⨍_Q |W^{1/p}(x) z|^p dx)^{1/p}`.
    pub fn rho(&self, q: &DyadicCube, p: f64, z: &[C64]) -> Result<f64> {
        Ok(self.rho_pow(q, p, z)?.powf(1.0 / p))
    }

    /// `ρ_Q(z)^p`.
    pub fn rho_pow(&self, q: &DyadicCube, p: f64, z: &[C64]) -> Result<f64> {
        if z.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, found: z.len() });
        }
        if self.is_identity() {
            return Ok(linalg::vnorm(z).powf(p));
        }
        let rule = self.rule(q);
        let mut acc = 0.0;
        for i in 0..rule.len() {
            acc += rule.weights[i] * self.root_norm(rule.point(i), p, z)?.powf(p);
        }
        Ok(acc)
    }

    /// `⨍_Q W`.
    pub fn average(&self, q: &DyadicCube) -> Result<CMat> {
        let rule = self.rule(q);
        let mut acc = CMat::zeros(self.m, self.m);
        for i in 0..rule.len() {
            acc += self.weight(rule.point(i))? * C64::new(rule.weights[i], 0.0);
        }
        Ok(acc)
    }
}

fn parse_d_list(rest: &str) -> Result<Vec<f64>> {
    let body = rest.strip_prefix("d=").ok_or_else(|| Error::Parse(format!("expected 'd=' in '{rest}'")))?;
    body.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad exponent '{t}': {e}"))))
        .collect()
}

fn nearest(table: &GridTable, x: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in table.points.iter().enumerate() {
        let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn validate_grid(table: &GridTable, m: usize, n: usize) -> Result<()> {
    if table.points.is_empty() || table.points.len() != table.values.len() {
        return Err(invalid("grid weight needs one matrix per sample point"));
    }
    for (x, w) in table.points.iter().zip(&table.values) {
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x.len() });
        }
        if w.nrows() != m || w.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, found: w.nrows() });
        }
        let herm_err = (w - w.adjoint()).norm();
        if herm_err > 1e-10 * w.norm().max(1.0) {
            return Err(invalid(format!("grid weight at {x:?} is not Hermitian")));
        }
        let spectrum = linalg::hermitian_spectrum(w);
        if spectrum[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite { spectrum });
        }
    }
    Ok(())
}

/// Reads a JSON-lines grid file `{"x": [..], "w": [[re, im], ...]}` with `w` row-major.
pub fn load_grid(path: &Path) -> Result<GridTable> {
    let text = fs::read_to_string(path)?;
    let mut table = GridTable { points: Vec::new(), values: Vec::new() };
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g: GridLine = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let m = (g.w.len() as f64).sqrt().round() as usize;
        if m * m != g.w.len() || m == 0 {
            return Err(Error::Parse(format!("line {}: w must hold m*m entries", lineno + 1)));
        }
        let w = CMat::from_row_iterator(m, m, g.w.iter().map(|[re, im]| C64::new(*re, *im)));
        table.points.push(g.x);
        table.values.push(w);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn e1(m: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); m];
        v[0] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn identity_root() {
        let w = WeightModel::identity(3, 2);
        let r = w.root(&[0.3, -1.0], 0.7).unwrap();
        assert_eq!(r, CMat::identity(3, 3));
    }

    #[test]
    fn scalar_power_root() {
        let w = WeightModel::scalar_power(0.5, 1, 1).unwrap();
        let r = w.root(&[4.0], 2.0).unwrap();
        assert!((r[(0, 0)].re - 4f64.powf(-0.25)).abs() < 1e-15);
        assert!((r[(0, 0)].re - 0.7071067811865476).abs() < 1e-15);
    }

    #[test]
    fn diagonal_power_root() {
        let w = WeightModel::diagonal_power(&[0.2, 0.8], 1).unwrap();
        let r = w.root(&[2.0], 1.0).unwrap();
        assert_eq!(r[(0, 0)].re, 2f64.powf(-0.2));
        assert_eq!(r[(1, 1)].re, 2f64.powf(-0.8));
        assert_eq!(r[(0, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn singular_evaluation_is_a_domain_error() {
        let w = WeightModel::scalar_power(0.5, 1, 2).unwrap();
        assert!(matches!(w.root(&[0.0, 0.0], 2.0), Err(Error::Domain { .. })));
        assert!(WeightModel::identity(1, 1).root(&[0.0], 2.0).is_ok());
    }

    #[test]
    fn rho_identity_is_the_euclidean_norm() {
        let w = WeightModel::identity(2, 1);
        let z = [C64::new(3.0, 0.0), C64::new(0.0, 4.0)];
        assert!((w.rho(&DyadicCube::new(5, &[-7]), 0.4, &z).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn rho_on_a_regular_cube() {
        let w = WeightModel::scalar_power(0.5, 1, 1).unwrap();
        let q = DyadicCube::new(0, &[1]);
        let oracle = ((2f64.powf(0.5) - 1.0) / 0.5).powf(0.5);
        let got = w.rho(&q, 2.0, &e1(1)).unwrap();
        // four-point Gauss-Legendre on a smooth integrand
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
        assert!((got - 0.9102).abs() < 1e-4);
        let oracle3 = ((2f64.powf(0.5) - 1.0) / 0.5).powf(1.0 / 3.0);
        assert!((w.rho(&q, 3.0, &e1(1)).unwrap() - oracle3).abs() < 1e-6);
    }

    #[test]
    fn rho_on_the_singular_cube() {
        let w = WeightModel::scalar_power(0.5, 1, 1).unwrap();
        let q = DyadicCube::new(0, &[0]);
        let got = w.rho(&q, 2.0, &e1(1)).unwrap();
        let oracle = 2f64.sqrt();
        assert!((got - oracle).abs() / oracle < 1e-3, "{got}");
    }

    #[test]
    fn parse_specs() {
        assert!(WeightModel::parse("ident", 1, 2).unwrap().is_identity());
        let w = WeightModel::parse("power:d=0.25", 2, 1).unwrap();
        assert!(matches!(w.kind, WeightKind::ScalarPower { d } if d == 0.25));
        let w = WeightModel::parse("dpower:d=0.1,0.3", 1, 5).unwrap();
        assert_eq!(w.m, 2);
        assert!(WeightModel::parse("banana", 1, 1).is_err());
        assert!(WeightModel::parse("power:d=x", 1, 1).is_err());
    }

    #[test]
    fn grid_roundtrip_and_validation() {
        let dir = std::env::temp_dir().join(format!("mwad-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.jsonl");
        std::fs::write(&path, "{\"x\":[0.0],\"w\":[[2,0],[0,1],[0,-1],[3,0]]}\n{\"x\":[1.0],\"w\":[[1,0],[0,0],[0,0],[1,0]]}\n")
            .unwrap();
        let w = WeightModel::parse(&format!("grid:{}", path.display()), 1, 1).unwrap();
        assert_eq!(w.m, 2);
        let at = w.weight(&[0.2]).unwrap();
        assert_eq!(at[(0, 1)], C64::new(0.0, 1.0));
        let r = w.root(&[0.2], 2.0).unwrap();
        assert!((&r * &r - &at).norm() < 1e-12);

        std::fs::write(&path, "{\"x\":[0.0],\"w\":[[1,0],[2,0],[2,0],[1,0]]}\n").unwrap();
        assert!(WeightModel::parse(&format!("grid:{}", path.display()), 1, 1).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
