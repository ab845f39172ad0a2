//! Finitely supported coefficient sequences `{t_Q}` and the quasi-norms measuring them.

mod norm;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic::{DyadicCube, Window};
use crate::error::{invalid, Error, Result};
use crate::linalg::C64;

pub use norm::{lp_weighted_norm, norm, norm_f_infty, NormResult, WeightMode};

/// `t: Q -> C^m`, zero outside the stored support.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSequence {
    pub n: usize,
    pub m: usize,
    entries: BTreeMap<DyadicCube, Vec<C64>>,
}

impl CoeffSequence {
    pub fn new(n: usize, m: usize) -> Self {
        CoeffSequence { n, m, entries: BTreeMap::new() }
    }

    /// Replaces the coefficient at `q`.
    pub fn insert(&mut self, q: DyadicCube, v: Vec<C64>) -> Result<()> {
        if q.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: q.dim() });
        }
        if v.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, found: v.len() });
        }
        self.entries.insert(q, v);
        Ok(())
    }

    pub fn insert_real(&mut self, q: DyadicCube, v: &[f64]) -> Result<()> {
        self.insert(q, v.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn get(&self, q: &DyadicCube) -> Option<&Vec<C64>> {
        self.entries.get(q)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DyadicCube, &Vec<C64>)> {
        self.entries.iter()
    }

    pub fn cubes(&self) -> impl Iterator<Item = &DyadicCube> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest and largest level in the support.
    pub fn level_range(&self) -> Option<(i32, i32)> {
        let lo = self.entries.keys().map(|q| q.j).min()?;
        let hi = self.entries.keys().map(|q| q.j).max()?;
        Some((lo, hi))
    }

    pub fn scaled(&self, lambda: C64) -> CoeffSequence {
        CoeffSequence {
            n: self.n,
            m: self.m,
            entries: self.entries.iter().map(|(q, v)| (q.clone(), v.iter().map(|z| z * lambda).collect())).collect(),
        }
    }

    /// Entrywise `self + other`.
    pub fn add(&self, other: &CoeffSequence) -> Result<CoeffSequence> {
        if self.n != other.n || self.m != other.m {
            return Err(invalid("cannot add sequences of different shapes"));
        }
        let mut out = self.clone();
        for (q, v) in &other.entries {
            let slot = out.entries.entry(q.clone()).or_insert_with(|| vec![C64::new(0.0, 0.0); self.m]);
            for (a, b) in slot.iter_mut().zip(v) {
                *a += b;
            }
        }
        Ok(out)
    }

    /// Applies `f(Q, t_Q)` to every stored coefficient.
    pub fn map<F: FnMut(&DyadicCube, &[C64]) -> Vec<C64>>(&self, mut f: F) -> CoeffSequence {
        CoeffSequence {
            n: self.n,
            m: self.m,
            entries: self.entries.iter().map(|(q, v)| (q.clone(), f(q, v))).collect(),
        }
    }

    pub fn check_window(&self, window: &Window) -> Result<()> {
        if window.n != self.n {
            return Err(Error::DimensionMismatch { expected: window.n, found: self.n });
        }
        match self.entries.keys().find(|q| !window.contains(q)) {
            Some(q) => Err(Error::SupportOutsideWindow(q.clone())),
            None => Ok(()),
        }
    }

    /// The smallest window with `K` a power of two that holds the support.
    pub fn bounding_window(&self) -> Result<Window> {
        let (lo, hi) = self.level_range().ok_or_else(|| Error::EmptyWindow("sequence has no support".into()))?;
        let mut k: u64 = 1;
        loop {
            let w = Window::new(lo, hi, k, self.n)?;
            if self.entries.keys().all(|q| w.contains(q)) {
                return Ok(w);
            }
            k = k.checked_mul(2).ok_or_else(|| invalid("support too wide for a window"))?;
        }
    }

    pub fn read_jsonl<R: BufRead>(reader: R, n_hint: Option<usize>) -> Result<CoeffSequence> {
        let mut seq: Option<CoeffSequence> = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CoeffLine =
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if rec.re.len() != rec.im.len() {
                return Err(Error::Parse(format!("line {}: re and im lengths differ", lineno + 1)));
            }
            let s = seq.get_or_insert_with(|| CoeffSequence::new(rec.k.len(), rec.re.len()));
            let v = rec.re.iter().zip(&rec.im).map(|(&a, &b)| C64::new(a, b)).collect();
            s.insert(DyadicCube::new(rec.j, &rec.k), v)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        }
        match (seq, n_hint) {
            (Some(s), Some(n)) if s.n != n => Err(Error::DimensionMismatch { expected: n, found: s.n }),
            (Some(s), _) => Ok(s),
            (None, Some(n)) => Ok(CoeffSequence::new(n, 1)),
            (None, None) => Err(Error::Parse("empty coefficient file".into())),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (q, v) in &self.entries {
            let rec = CoeffLine {
                j: q.j,
                k: q.k.to_vec(),
                re: v.iter().map(|z| z.re).collect(),
                im: v.iter().map(|z| z.im).collect(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CoeffLine {
    j: i32,
    k: Vec<i64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    B,
    F,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::B => "b",
            Family::F => "f",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b" | "B" => Ok(Family::B),
            "f" | "F" => Ok(Family::F),
            _ => Err(Error::Parse(format!("family must be b or f, got '{s}'"))),
        }
    }
}

/// An exponent in `(0, inf]` with infinity kept exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    pub fn value(&self) -> f64 {
        match self {
            Exponent::Finite(v) => *v,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    /// `min(1, q)`.
    pub fn min_one(&self) -> f64 {
        match self {
            Exponent::Finite(v) => v.min(1.0),
            Exponent::Infinite => 1.0,
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinity" | "Inf" | "∞" => Ok(Exponent::Infinite),
            _ => s
                .parse::<f64>()
                .map(|v| if v.is_infinite() { Exponent::Infinite } else { Exponent::Finite(v) })
                .map_err(|e| Error::Parse(format!("bad exponent '{s}': {e}"))),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(v) => s.serialize_f64(*v),
            Exponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Exponent::Finite(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `(family, s, τ, p, q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub family: Family,
    pub s: f64,
    pub tau: f64,
    pub p: f64,
    pub q: Exponent,
}

impl SpaceParams {
    pub fn new(family: Family, s: f64, tau: f64, p: f64, q: Exponent) -> Result<Self> {
        let sp = SpaceParams { family, s, tau, p, q };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(invalid(format!("p must be in (0, inf), got {}", self.p)));
        }
        if let Exponent::Finite(q) = self.q {
            if !(q > 0.0 && q.is_finite()) {
                return Err(invalid(format!("q must be in (0, inf], got {q}")));
            }
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(invalid(format!("tau must be in [0, inf), got {}", self.tau)));
        }
        if !self.s.is_finite() {
            return Err(invalid("s must be finite"));
        }
        Ok(())
    }

    /// `r = min(p, q, 1)`.
    pub fn r(&self) -> f64 {
        self.p.min(self.q.min_one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_roundtrip() {
        let mut t = CoeffSequence::new(2, 2);
        t.insert(DyadicCube::new(-1, &[3, -4]), vec![C64::new(1.5, -0.25), C64::new(0.0, 1e-300)]).unwrap();
        t.insert(DyadicCube::new(2, &[0, 0]), vec![C64::new(0.1, 0.2), C64::new(-3.0, 0.0)]).unwrap();
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let back = CoeffSequence::read_jsonl(std::io::Cursor::new(buf), Some(2)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn dimension_checks() {
        let mut t = CoeffSequence::new(1, 1);
        assert!(t.insert(DyadicCube::new(0, &[0, 0]), vec![C64::new(1.0, 0.0)]).is_err());
        assert!(t.insert(DyadicCube::new(0, &[0]), vec![]).is_err());
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::Infinite);
        assert_eq!("0.5".parse::<Exponent>().unwrap(), Exponent::Finite(0.5));
        let js = serde_json::to_string(&Exponent::Infinite).unwrap();
        assert_eq!(serde_json::from_str::<Exponent>(&js).unwrap(), Exponent::Infinite);
    }

    #[test]
    fn bounding_window_holds_support() {
        let mut t = CoeffSequence::new(1, 1);
        t.insert_real(DyadicCube::new(0, &[-3]), &[1.0]).unwrap();
        t.insert_real(DyadicCube::new(2, &[5]), &[1.0]).unwrap();
        let w = t.bounding_window().unwrap();
        assert!(t.check_window(&w).is_ok());
        assert_eq!((w.j_min, w.j_max, w.k), (0, 2, 4));
    }

    #[test]
    fn params_validation() {
        assert!(SpaceParams::new(Family::B, 0.0, 0.0, 0.0, Exponent::Finite(1.0)).is_err());
        assert!(SpaceParams::new(Family::B, 0.0, 0.0, 1.0, Exponent::Finite(0.0)).is_err());
        let sp = SpaceParams::new(Family::F, 0.0, 0.0, 2.0, Exponent::Finite(0.5)).unwrap();
        assert_eq!(sp.r(), 0.5);
    }
}
